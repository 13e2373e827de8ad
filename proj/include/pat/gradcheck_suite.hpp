#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Finite-difference check of the complete training objective, run in double
// precision. Scalar-independent interface so binary32 code can call it.
namespace pat::suite {

struct GroupResult {
    std::string name;
    std::size_t coords = 0;
    double max_rel_error = 0;
};

struct SuiteOptions {
    std::uint64_t seed = 1;
    double step = 1e-4;  // 1e-3 leaves O(h^2) truncation above 1e-4 on small gradients
    std::size_t coords_per_tensor = 32;
    bool suppression = true;
    bool zeroshot = false;
};

struct SuiteResult {
    double max_rel_error = 0;
    std::size_t coords = 0;
    std::string worst;
    double worst_analytic = 0;
    double worst_numeric = 0;
    std::vector<GroupResult> groups;
    double loss = 0;
    double seconds = 0;
};

// d=16, 4x4 token grid, 4 FG and 4 BG prompts, L=2 of 3 blocks.
SuiteResult full_loss_gradcheck(const SuiteOptions& opts = {});

}  // namespace pat::suite
