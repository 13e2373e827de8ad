#include "pat/encoder.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

void EncoderConfig::validate() const {
    if (patch_size == 0 || image_size % patch_size != 0) {
        throw ConfigError("encoder: image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                          std::to_string(patch_size));
    }
    if (n_heads == 0 || d % n_heads != 0) throw ConfigError("encoder: d must be divisible by n_heads");
    if (n_blocks == 0) throw ConfigError("encoder: need at least one block");
    if (enhanced_blocks > n_blocks) throw ConfigError("encoder: L must not exceed the number of blocks");
    if (channels != 1 && channels != 3) throw ConfigError("encoder: channels must be 1 or 3");
    if (mlp_hidden() == 0) throw ConfigError("encoder: mlp_ratio too small");
}

EncoderParams EncoderParams::make(ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    EncoderParams p;
    p.patch = Linear::make(store, "encoder.patch", cfg.patch_dim(), cfg.d, rng);
    p.pos = store.add("encoder.pos", {cfg.tokens(), cfg.d}, normal_init(cfg.tokens() * cfg.d, 0.02, rng));
    for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
        const std::string n = "encoder.block" + std::to_string(i);
        BlockParams b;
        b.ln1_gamma = store.add_ones(n + ".ln1.gamma", {cfg.d});
        b.ln1_beta = store.add_zeros(n + ".ln1.beta", {cfg.d});
        b.qkv_weight = store.add_xavier(n + ".qkv.weight", cfg.d, 3 * cfg.d, rng);
        b.q_bias = store.add_zeros(n + ".q.bias", {cfg.d});
        b.v_bias = store.add_zeros(n + ".v.bias", {cfg.d});
        b.out = Linear::make(store, n + ".out", cfg.d, cfg.d, rng);
        b.ln2_gamma = store.add_ones(n + ".ln2.gamma", {cfg.d});
        b.ln2_beta = store.add_zeros(n + ".ln2.beta", {cfg.d});
        b.mlp = Mlp2::make(store, n + ".mlp", cfg.d, cfg.mlp_hidden(), cfg.d, rng);
        p.blocks.push_back(std::move(b));
    }
    return p;
}

Tensor patch_embed(const Image& image, const EncoderParams& params, const EncoderConfig& cfg) {
    if (image.height != cfg.image_size || image.width != cfg.image_size || image.channels != cfg.channels) {
        throw DimensionError("patch_embed: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                             "x" + std::to_string(image.channels) + " does not match encoder " +
                             std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size) + "x" +
                             std::to_string(cfg.channels));
    }
    const std::size_t g = cfg.grid(), ps = cfg.patch_size, c = cfg.channels;
    std::vector<Scalar> patches(cfg.tokens() * cfg.patch_dim());
    std::size_t k = 0;
    for (std::size_t gy = 0; gy < g; ++gy)
        for (std::size_t gx = 0; gx < g; ++gx)
            for (std::size_t py = 0; py < ps; ++py)
                for (std::size_t px = 0; px < ps; ++px)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        patches[k++] = Scalar(image.at(gy * ps + py, gx * ps + px, ch)) / Scalar(255);
    Tensor flat({cfg.tokens(), cfg.patch_dim()}, std::move(patches));
    return add(params.patch(flat), params.pos);
}

Tensor block_forward(const Tensor& tokens, const BlockParams& params, std::size_t n_heads,
                     std::vector<Tensor>* attention) {
    if (tokens.rank() != 2) throw DimensionError("block_forward: tokens must be [T, d]");
    const std::size_t d = tokens.dim(1);
    if (n_heads == 0 || d % n_heads != 0) throw DimensionError("block_forward: d not divisible by heads");
    const std::size_t dh = d / n_heads;
    const Scalar inv_sqrt_dh = Scalar(1.0 / std::sqrt(double(dh)));

    Tensor h = layer_norm(tokens, params.ln1_gamma, params.ln1_beta);
    Tensor qkv = matmul(h, params.qkv_weight);
    std::vector<Tensor> heads;
    heads.reserve(n_heads);
    for (std::size_t i = 0; i < n_heads; ++i) {
        Tensor q = add(slice(qkv, 1, i * dh, (i + 1) * dh), slice(params.q_bias, 0, i * dh, (i + 1) * dh));
        Tensor k = slice(qkv, 1, d + i * dh, d + (i + 1) * dh);
        Tensor v = add(slice(qkv, 1, 2 * d + i * dh, 2 * d + (i + 1) * dh), slice(params.v_bias, 0, i * dh, (i + 1) * dh));
        Tensor a = softmax_lastdim(scale(matmul_nt(q, k), inv_sqrt_dh));
        if (attention) attention->push_back(a);
        heads.push_back(matmul(a, v));
    }
    Tensor x = add(tokens, params.out(n_heads == 1 ? heads[0] : concat(heads, 1)));
    return add(x, params.mlp(layer_norm(x, params.ln2_gamma, params.ln2_beta)));
}

Tensor synchronize_bg(const TokenState& query, const std::vector<TokenState>& supports) {
    if (!query.b.defined()) return {};
    if (supports.empty()) return query.b;
    Tensor support_mean = supports[0].b;
    for (std::size_t k = 1; k < supports.size(); ++k) support_mean = add(support_mean, supports[k].b);
    if (supports.size() > 1) support_mean = scale(support_mean, Scalar(1) / Scalar(supports.size()));
    return scale(add(query.b, support_mean), Scalar(0.5));
}

namespace {

void run_block(TokenState& s, const BlockParams& params, std::size_t n_heads) {
    std::vector<Tensor> parts{s.x};
    std::vector<std::size_t> sizes{s.x.dim(0)};
    if (s.p.defined()) {
        parts.push_back(s.p);
        sizes.push_back(s.p.dim(0));
    }
    if (s.b.defined()) {
        parts.push_back(s.b);
        sizes.push_back(s.b.dim(0));
    }
    Tensor out = block_forward(parts.size() == 1 ? s.x : concat(parts, 0), params, n_heads);
    if (parts.size() == 1) {
        s.x = out;
        return;
    }
    auto pieces = split(out, 0, sizes);
    std::size_t i = 0;
    s.x = pieces[i++];
    if (s.p.defined()) s.p = pieces[i++];
    if (s.b.defined()) s.b = pieces[i++];
}

}  // namespace

StreamOutput run_streams(std::vector<TokenState> supports, TokenState query, const EncoderParams& params,
                         const EncoderConfig& cfg, const EnhancementHook& hook) {
    const std::size_t n_blocks = params.blocks.size();
    const std::size_t enhanced = std::min(cfg.enhanced_blocks, n_blocks);
    StreamOutput out;
    for (std::size_t n = 0; n < n_blocks; ++n) {
        if (hook && n_blocks - 1 - n < enhanced) {
            try {
                hook(n, supports, query);
            } catch (const std::exception& e) {
                std::throw_with_nested(std::runtime_error("prompt enhancement failed before block " +
                                                          std::to_string(n) + ": " + e.what()));
            }
            ++out.enhancements;
        }
        if (query.b.defined()) {
            Tensor shared = synchronize_bg(query, supports);
            query.b = shared;
            for (auto& s : supports) s.b = shared;
        }
        run_block(query, params.blocks[n], cfg.n_heads);
        for (auto& s : supports) run_block(s, params.blocks[n], cfg.n_heads);
    }
    out.b_final = synchronize_bg(query, supports);
    out.query = std::move(query);
    out.supports = std::move(supports);
    return out;
}

}  // namespace PAT_ABI
}  // namespace pat
