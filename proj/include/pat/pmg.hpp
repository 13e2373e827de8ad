#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "pat/nn.hpp"

namespace pat {
inline namespace PAT_ABI {

// One residual two-layer MLP per FG prompt: phi_i = p_i + g_i(p_i).
struct PartFilterLearner {
    std::vector<Mlp2> g;

    std::size_t size() const { return g.size(); }
    static PartFilterLearner make(ParamStore& store, std::size_t n_parts, std::size_t d, std::mt19937_64& rng);
};

struct PartMaskSet {
    Tensor masks;    // [N_p, N_l]
    Tensor fg_mask;  // [N_l]
    bool degenerate = false;  // fg_mask is all zero
};

Tensor learn_part_filters(const Tensor& prompts, const PartFilterLearner& learner);

// Per-token 1x1 responses, softmax across parts, gated by fg_mask.
PartMaskSet generate_part_masks(const Tensor& x, const Tensor& filters, const Tensor& fg_mask);

// Number of part-mask normalization checks performed so far (runtime checks build).
std::size_t part_mask_checks();
bool part_mask_checks_enabled();

// sigmoid(cos(x_q, x_s) . m_s) per query token, detached. With `normalize`
// the affinity sum is divided by the support mask mass.
Tensor pseudo_query_mask(const Tensor& x_q, const Tensor& x_s, const Tensor& m_s, bool normalize = false);

}  // namespace PAT_ABI
}  // namespace pat
