#pragma once

#include <functional>
#include <random>
#include <vector>

#include "pat/image.hpp"
#include "pat/nn.hpp"

namespace pat {
inline namespace PAT_ABI {

struct EncoderConfig {
    std::size_t image_size = 64;
    std::size_t patch_size = 8;
    std::size_t channels = 1;
    std::size_t d = 64;
    std::size_t n_blocks = 6;
    std::size_t n_heads = 4;
    double mlp_ratio = 4.0;
    std::size_t enhanced_blocks = 3;  // L: prompt enhancement runs before each of the last L blocks

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t tokens() const { return grid() * grid(); }
    std::size_t patch_dim() const { return patch_size * patch_size * channels; }
    std::size_t mlp_hidden() const { return std::size_t(double(d) * mlp_ratio); }
    void validate() const;
};

struct BlockParams {
    Tensor ln1_gamma, ln1_beta;
    Tensor qkv_weight;  // [d, 3d]
    Tensor q_bias;      // [d]
    Tensor v_bias;      // [d]; keys carry no bias, softmax would cancel it
    Linear out;  // d -> d
    Tensor ln2_gamma, ln2_beta;
    Mlp2 mlp;    // d -> hidden -> d
};

struct EncoderParams {
    Linear patch;    // patch_dim -> d
    Tensor pos;      // [N_l, d], image tokens only
    std::vector<BlockParams> blocks;

    static EncoderParams make(ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng);
};

// Token sequence of one stream. Concatenation order is always [x; p; b];
// p or b may be undefined (prompts disabled, zero-shot mode).
struct TokenState {
    Tensor x;  // [N_l, d]
    Tensor p;  // [N_p, d]
    Tensor b;  // [N_b, d]

    std::size_t prompt_rows() const { return (p.defined() ? p.dim(0) : 0) + (b.defined() ? b.dim(0) : 0); }
};

// Non-overlapping patches, flattened (row, col, channel) and projected, plus
// positional embeddings.
Tensor patch_embed(const Image& image, const EncoderParams& params, const EncoderConfig& cfg);

// Pre-norm transformer block with full self-attention over all rows.
// Per-head attention probabilities are appended to `attention` when given.
Tensor block_forward(const Tensor& tokens, const BlockParams& params, std::size_t n_heads,
                     std::vector<Tensor>* attention = nullptr);

// Called before block `block` (0-based) for each of the last L blocks.
using EnhancementHook = std::function<void(std::size_t block, std::vector<TokenState>& supports, TokenState& query)>;

struct StreamOutput {
    TokenState query;
    std::vector<TokenState> supports;
    Tensor b_final;  // synchronized BG prompts after the last block (undefined when BG prompts are off)
    std::size_t enhancements = 0;
};

// Dual-stream encoder pass: per block, optional enhancement, BG-prompt
// synchronization B = (B^q + mean_k B^s_k)/2, then the shared block on each stream.
StreamOutput run_streams(std::vector<TokenState> supports, TokenState query, const EncoderParams& params,
                         const EncoderConfig& cfg, const EnhancementHook& hook = {});

// Mean of BG prompts between the query stream and the average support stream.
Tensor synchronize_bg(const TokenState& query, const std::vector<TokenState>& supports);

}  // namespace PAT_ABI
}  // namespace pat
