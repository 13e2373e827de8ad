#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pat/nn.hpp"

namespace pat {
inline namespace PAT_ABI {

struct GradCheckOptions {
    double step = 1e-3;                 // central-difference half step h
    std::size_t coords_per_tensor = 32;  // all coordinates when the tensor is smaller
    std::uint64_t seed = 0;
};

struct GradCheckGroup {
    std::string name;
    std::size_t coords = 0;
    double max_rel_error = 0;
};

struct GradCheckResult {
    double max_rel_error = 0;
    std::size_t coords = 0;
    std::string worst;  // "<tensor>[<flat index>]"
    double worst_analytic = 0;
    double worst_numeric = 0;
    std::vector<GradCheckGroup> groups;

    bool passed(double tol) const { return max_rel_error < tol; }
};

using ScalarFn = std::function<Tensor()>;

// Compares reverse-mode gradients of `f` against central differences
//   rel = |analytic - numeric| / (|analytic| + |numeric| + 1e-8)
// at sampled coordinates of each tensor. `f` must build a fresh graph per call.
GradCheckResult finite_diff_check(const ScalarFn& f, const std::vector<NamedTensor>& params,
                                  const GradCheckOptions& opts = {});

// Same, against caller-supplied analytic gradients (one vector per tensor).
GradCheckResult finite_diff_check(const ScalarFn& f, const std::vector<NamedTensor>& params,
                                  const std::vector<std::vector<Scalar>>& analytic,
                                  const GradCheckOptions& opts = {});

}  // namespace PAT_ABI
}  // namespace pat
