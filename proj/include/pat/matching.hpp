#pragma once

#include <random>
#include <span>
#include <vector>

#include "pat/nn.hpp"

namespace pat {
inline namespace PAT_ABI {

struct MatchParams {
    Tensor lambda_raw;  // [1]; lambda = sigmoid(lambda_raw)
    double temperature = 20.0;
    double alpha = 0.05;
    double beta = 0.05;

    Tensor lambda() const { return sigmoid(lambda_raw); }
    static MatchParams make(ParamStore& store);
};

struct FusedPrompts {
    Tensor p_bar;  // [N_p, d]
    Tensor b_bar;  // [1, d]
};

// p_bar = lambda * p_q + (1 - lambda) * p_s, b_bar = mean of b_final rows.
// `lambda` is a single-element tensor.
FusedPrompts fuse_prompts(const Tensor& p_q, const Tensor& p_s, const Tensor& b_final, const Tensor& lambda);

// Two-channel logits [N_l, 2] = temperature * [cos(x, b_bar), max_i cos(x, p_bar_i)].
Tensor match_predict(const Tensor& x_q, const Tensor& p_bar, const Tensor& b_bar, double temperature);

// Mean pairwise cosine between distinct part masks, averaged over the two
// streams. Zero for a single part.
Tensor part_regularization_loss(const Tensor& masks_q, const Tensor& masks_s);
// Pairwise term of one stream: sum_{i != j} cos(m_i, m_j) / (N_p (N_p - 1)).
Tensor part_similarity(const Tensor& masks);

// Mask-weighted mean of token rows, [1, d]. An empty mask yields zeros.
Tensor masked_average(const Tensor& x, const Tensor& mask);

Tensor prompt_contrast_loss(const Tensor& p, const Tensor& b, const Tensor& x, const Tensor& fg_mask,
                            const Tensor& bg_mask);

struct LossTerms {
    Tensor total;
    Tensor ce;
    Tensor reg;  // undefined when not computed
    Tensor dis;
};

LossTerms total_loss(const Tensor& logits, std::span<const int> gt, const Tensor& reg, const Tensor& dis, double alpha,
                     double beta);

// [max_i cos(x, p_i); x] -> 1x1 conv (d) -> GELU -> 1x1 conv (2).
struct ZeroShotHead {
    Linear conv1;
    Linear conv2;

    static ZeroShotHead make(ParamStore& store, std::size_t d, std::mt19937_64& rng);
};

Tensor zeroshot_predict(const Tensor& x_q, const Tensor& fg_prompts, const ZeroShotHead& head);

// Argmax over the two channels: 1 = foreground.
std::vector<int> predict_labels(const Tensor& logits);

}  // namespace PAT_ABI
}  // namespace pat
