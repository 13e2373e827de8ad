#include "pat/enhancement.hpp"

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

FgEnhancement enhance_fg(const Tensor& prompts, const Tensor& x, const Tensor& fg_mask,
                         const PartFilterLearner& learner, const TransferParams& transfer, const EnhanceOptions& opts) {
    FgEnhancement out;
    if (opts.use_pmg) {
        out.parts = generate_part_masks(x, learn_part_filters(prompts, learner), fg_mask);
        out.prompts = semantic_transfer(prompts, x, out.parts.masks, transfer, opts.grid_h, opts.grid_w,
                                        opts.suppression, opts.log_base);
    } else {
        out.parts.fg_mask = fg_mask;
        out.prompts = semantic_transfer(prompts, x, fg_mask, transfer, opts.grid_h, opts.grid_w, opts.suppression,
                                        opts.log_base);
    }
    return out;
}

Tensor enhance_bg(const Tensor& bg_prompts, const Tensor& x, const Tensor& fg_mask, const TransferParams& transfer,
                  const EnhanceOptions& opts) {
    Tensor bg_mask = add_scalar(scale(fg_mask, Scalar(-1)), Scalar(1));
    return semantic_transfer(bg_prompts, x, bg_mask, transfer, opts.grid_h, opts.grid_w, opts.suppression,
                             opts.log_base);
}

Tensor pseudo_mask_from_supports(const Tensor& x_q, const std::vector<TokenState>& supports,
                                 const std::vector<Tensor>& support_masks, bool normalize) {
    if (supports.empty() || supports.size() != support_masks.size()) {
        throw ContractError("pseudo mask: need one mask per support stream");
    }
    NoGradGuard guard;
    Tensor acc = pseudo_query_mask(x_q, supports[0].x, support_masks[0], normalize);
    for (std::size_t k = 1; k < supports.size(); ++k)
        acc = add(acc, pseudo_query_mask(x_q, supports[k].x, support_masks[k], normalize));
    if (supports.size() > 1) acc = scale(acc, Scalar(1) / Scalar(supports.size()));
    return acc;
}

Tensor prompt_pseudo_mask(const Tensor& x_q, const Tensor& prompts, double scale_factor) {
    return detached([&] {
        MaxResult best = max_lastdim(cosine_similarity(x_q.detach(), prompts.detach()));
        return sigmoid(scale(best.values, Scalar(scale_factor)));
    });
}

void enhancement_step(std::vector<TokenState>& supports, TokenState& query, const std::vector<Tensor>& support_masks,
                      const PartFilterLearner& learner, const TransferParams& transfer, const EnhanceOptions& opts,
                      EnhancementRecord* record) {
    if (supports.size() != support_masks.size()) throw ContractError("enhancement: one mask per support required");
    // Reads the features before any prompt of this step changes.
    Tensor pseudo = pseudo_mask_from_supports(query.x, supports, support_masks, opts.normalize_affinity);
    std::vector<PartMaskSet> support_parts;
    for (std::size_t k = 0; k < supports.size(); ++k) {
        TokenState& s = supports[k];
        if (s.p.defined()) {
            FgEnhancement e = enhance_fg(s.p, s.x, support_masks[k], learner, transfer, opts);
            s.p = e.prompts;
            support_parts.push_back(std::move(e.parts));
        }
        if (s.b.defined()) s.b = enhance_bg(s.b, s.x, support_masks[k], transfer, opts);
    }
    PartMaskSet query_parts;
    if (query.p.defined()) {
        FgEnhancement e = enhance_fg(query.p, query.x, pseudo, learner, transfer, opts);
        query.p = e.prompts;
        query_parts = std::move(e.parts);
    }
    if (query.b.defined()) query.b = enhance_bg(query.b, query.x, pseudo, transfer, opts);
    if (record) {
        ++record->steps;
        record->pseudo_mask = pseudo;
        record->query_parts = std::move(query_parts);
        record->support_parts = std::move(support_parts);
    }
}

}  // namespace PAT_ABI
}  // namespace pat
