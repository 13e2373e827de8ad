#pragma once

#include <random>
#include <vector>

#include "pat/gradcheck.hpp"
#include "pat/tensor.hpp"

namespace pat::testing {

inline Tensor uniform(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1, bool param = false) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<Scalar> v(shape_numel(shape));
    for (auto& x : v) x = Scalar(u(rng));
    return param ? Tensor::parameter(std::move(shape), std::move(v)) : Tensor(std::move(shape), std::move(v));
}

inline Tensor param(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    return uniform(std::move(shape), rng, lo, hi, true);
}

// Projects a tensor to a scalar with fixed random weights.
inline Tensor probe(const Tensor& t, const Tensor& w) { return sum(mul(t, w)); }

inline double max_abs_diff(std::span<const Scalar> a, std::span<const Scalar> b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

inline std::vector<NamedTensor> named(const std::vector<Tensor>& ts) {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < ts.size(); ++i) out.push_back({"t" + std::to_string(i), ts[i]});
    return out;
}

inline void append(std::vector<NamedTensor>& out, const std::vector<NamedTensor>& more) {
    out.insert(out.end(), more.begin(), more.end());
}

}  // namespace pat::testing
