#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "pat/nn.hpp"

namespace pat {
inline namespace PAT_ABI {

struct SuppressionConfig {
    std::size_t top_k = 15;
    std::size_t radius = 5;  // window is (2r+1) x (2r+1)
    double sigma = 2.0;
    bool enabled = true;

    void validate() const;
};

enum class LogBase { Ten, E };

struct TransferParams {
    Tensor w_q, w_k, w_v;  // [d, d]
    Mlp2 proj;             // d -> d -> d

    static TransferParams make(ParamStore& store, const std::string& name, std::size_t d, std::mt19937_64& rng);
};

inline constexpr double kMaskEpsilon = 1e-7;

// log(mask + eps) in the chosen base; same shape as mask.
Tensor log_mask_bias(const Tensor& mask, LogBase base = LogBase::Ten, double eps = kMaskEpsilon);

// Unnormalized Gaussian weights over the (2r+1)^2 window, row-major with
// offset (m, n) at index (m + r) * (2r + 1) + (n + r).
std::vector<double> gaussian_window(std::size_t radius, double sigma);

// Per row of [R, H*W] logits: the top-K positions are replaced by the
// normalized Gaussian average of their in-bounds window, read from the
// original logits. Other positions pass through untouched.
Tensor gaussian_suppress(const Tensor& logits, std::size_t height, std::size_t width, const SuppressionConfig& cfg);

// Mask-biased cross-attention from prompts to image tokens followed by the
// residual projection y + proj(y). `masks` is [N_p, N_l] or a single [N_l]
// mask shared by all prompt rows.
Tensor semantic_transfer(const Tensor& prompts, const Tensor& x, const Tensor& masks, const TransferParams& params,
                         std::size_t height, std::size_t width, const SuppressionConfig& cfg,
                         LogBase base = LogBase::Ten);

}  // namespace PAT_ABI
}  // namespace pat
