#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pat/encoder.hpp"
#include "pat/enhancement.hpp"
#include "pat/episodes.hpp"
#include "pat/matching.hpp"
#include "pat/prompt_init.hpp"

namespace pat {
inline namespace PAT_ABI {

struct ModelConfig {
    EncoderConfig encoder;
    std::size_t n_fg = 8;
    std::size_t n_bg = 8;
    std::size_t text_dim = 64;
    bool use_fg_prompts = true;
    bool use_bg_prompts = true;
    bool use_spt = true;
    bool use_pmg = true;
    SuppressionConfig suppression;
    LogBase log_base = LogBase::Ten;
    bool normalize_affinity = false;
    PromptInitMode init_mode = PromptInitMode::Text;
    double temperature = 20.0;
    double alpha = 0.05;
    double beta = 0.05;
    bool zeroshot = false;
    double zeroshot_scale = 5.0;
    std::string embeddings;  // embedding file; empty selects the hashed stub

    void validate() const;
    EnhanceOptions enhance_options() const;
};

// All trainables. Field tensors alias entries of `store`.
struct ModelParams {
    ParamStore store;
    EncoderParams encoder;
    PromptParams prompts;
    PartFilterLearner pmg;
    TransferParams spt;
    MatchParams match;
    ZeroShotHead zeroshot;

    static ModelParams make(const ModelConfig& cfg, std::uint64_t seed);
};

EmbeddingProvider make_provider(const ModelConfig& cfg);

// Area-average of a full-resolution mask over each patch, row-major token order.
std::vector<Scalar> token_mask(const Mask& mask, std::size_t patch);
// token_mask >= 0.5.
std::vector<int> token_labels(const Mask& mask, std::size_t patch);
// Nearest-neighbour upsampling of token labels to image resolution.
Mask upsample_labels(std::span<const int> labels, std::size_t grid, std::size_t patch);

struct EpisodeView {
    std::vector<const Image*> support_images;
    std::vector<const Mask*> support_masks;
    const Image* query = nullptr;
    const Mask* query_mask = nullptr;  // only read for the loss
    std::string class_name;

    static EpisodeView of(const EpisodeTask& task, bool with_query_mask = true);
};

struct ForwardOutput {
    Tensor logits;  // [N_l, 2]
    LossTerms loss; // filled when the view carries a query mask
    std::vector<int> token_gt;
    EnhancementRecord record;
    std::size_t enhancements = 0;
    Tensor query_tokens;   // final query image tokens
    Tensor final_pseudo;   // pseudo-mask from the final features (when computed)
};

ForwardOutput forward_episode(const ModelParams& params, const ModelConfig& cfg, const EmbeddingProvider& provider,
                              const EpisodeView& view);

// Predicted token labels of a forward pass (1 = FG).
std::vector<int> predict_tokens(const ForwardOutput& out);

}  // namespace PAT_ABI
}  // namespace pat
