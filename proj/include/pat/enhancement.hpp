#pragma once

#include <vector>

#include "pat/encoder.hpp"
#include "pat/pmg.hpp"
#include "pat/spt.hpp"

namespace pat {
inline namespace PAT_ABI {

struct EnhanceOptions {
    bool use_pmg = true;  // off: every FG prompt transfers from the whole FG mask
    SuppressionConfig suppression;
    LogBase log_base = LogBase::Ten;
    bool normalize_affinity = false;
    std::size_t grid_h = 8, grid_w = 8;
};

struct FgEnhancement {
    Tensor prompts;
    PartMaskSet parts;
};

FgEnhancement enhance_fg(const Tensor& prompts, const Tensor& x, const Tensor& fg_mask,
                         const PartFilterLearner& learner, const TransferParams& transfer, const EnhanceOptions& opts);

// Transfer from the reversed mask 1 - fg_mask, shared by every BG prompt.
Tensor enhance_bg(const Tensor& bg_prompts, const Tensor& x, const Tensor& fg_mask, const TransferParams& transfer,
                  const EnhanceOptions& opts);

// State left behind by the most recent enhancement step.
struct EnhancementRecord {
    std::size_t steps = 0;
    Tensor pseudo_mask;  // [N_l], query side
    PartMaskSet query_parts;
    std::vector<PartMaskSet> support_parts;
};

// Averages pseudo_query_mask over the K supports.
Tensor pseudo_mask_from_supports(const Tensor& x_q, const std::vector<TokenState>& supports,
                                 const std::vector<Tensor>& support_masks, bool normalize);

// sigmoid(scale * max_i cos(x, p_i)) per token, detached. Drives zero-shot SPT.
Tensor prompt_pseudo_mask(const Tensor& x_q, const Tensor& prompts, double scale);

// One prompt-enhancement step on every stream. Query uses the pseudo-mask,
// supports use their own masks. Streams without p (or b) skip that part.
void enhancement_step(std::vector<TokenState>& supports, TokenState& query, const std::vector<Tensor>& support_masks,
                      const PartFilterLearner& learner, const TransferParams& transfer, const EnhanceOptions& opts,
                      EnhancementRecord* record = nullptr);

}  // namespace PAT_ABI
}  // namespace pat
