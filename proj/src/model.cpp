#include "pat/model.hpp"

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

void ModelConfig::validate() const {
    encoder.validate();
    suppression.validate();
    if (use_fg_prompts && n_fg == 0) throw ConfigError("model: FG prompts enabled with n_fg = 0");
    if (use_bg_prompts && !zeroshot && n_bg == 0) throw ConfigError("model: BG prompts enabled with n_bg = 0");
    if (zeroshot && !use_fg_prompts) throw ConfigError("model: zero-shot mode needs FG prompts");
    if (text_dim == 0) throw ConfigError("model: text_dim must be positive");
    if (!(temperature > 0)) throw ConfigError("model: temperature must be positive");
}

EnhanceOptions ModelConfig::enhance_options() const {
    EnhanceOptions o;
    o.use_pmg = use_pmg;
    o.suppression = suppression;
    o.log_base = log_base;
    o.normalize_affinity = normalize_affinity;
    o.grid_h = o.grid_w = encoder.grid();
    return o;
}

ModelParams ModelParams::make(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    ModelParams m;
    const std::size_t d = cfg.encoder.d;
    m.encoder = EncoderParams::make(m.store, cfg.encoder, rng);
    m.prompts = PromptParams::make(m.store, cfg.n_fg, cfg.n_bg, cfg.text_dim, d, rng);
    m.pmg = PartFilterLearner::make(m.store, cfg.n_fg, d, rng);
    m.spt = TransferParams::make(m.store, "spt", d, rng);
    m.match = MatchParams::make(m.store);
    m.match.temperature = cfg.temperature;
    m.match.alpha = cfg.alpha;
    m.match.beta = cfg.beta;
    m.zeroshot = ZeroShotHead::make(m.store, d, rng);
    return m;
}

EmbeddingProvider make_provider(const ModelConfig& cfg) {
    EmbeddingProvider p =
        cfg.embeddings.empty() ? EmbeddingProvider::stub(cfg.text_dim) : EmbeddingProvider::from_file(cfg.embeddings);
    if (p.dim() != cfg.text_dim) {
        throw ConfigError("embedding file has dim " + std::to_string(p.dim()) + ", config text_dim is " +
                          std::to_string(cfg.text_dim));
    }
    return p;
}

std::vector<Scalar> token_mask(const Mask& mask, std::size_t patch) {
    if (patch == 0 || mask.height % patch != 0 || mask.width % patch != 0) {
        throw DimensionError("token_mask: mask size not divisible by patch size");
    }
    const std::size_t gh = mask.height / patch, gw = mask.width / patch;
    std::vector<Scalar> out(gh * gw, 0);
    for (std::size_t y = 0; y < mask.height; ++y)
        for (std::size_t x = 0; x < mask.width; ++x)
            if (mask.at(y, x)) out[(y / patch) * gw + x / patch] += 1;
    const Scalar inv = Scalar(1) / Scalar(patch * patch);
    for (auto& v : out) v *= inv;
    return out;
}

std::vector<int> token_labels(const Mask& mask, std::size_t patch) {
    auto soft = token_mask(mask, patch);
    std::vector<int> out(soft.size());
    for (std::size_t i = 0; i < soft.size(); ++i) out[i] = soft[i] >= Scalar(0.5) ? 1 : 0;
    return out;
}

Mask upsample_labels(std::span<const int> labels, std::size_t grid, std::size_t patch) {
    if (labels.size() != grid * grid) throw DimensionError("upsample_labels: label count does not match grid");
    Mask m(grid * patch, grid * patch);
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x) m.at(y, x) = labels[(y / patch) * grid + x / patch] ? 1 : 0;
    return m;
}

EpisodeView EpisodeView::of(const EpisodeTask& task, bool with_query_mask) {
    EpisodeView v;
    for (const auto& s : task.supports) {
        v.support_images.push_back(&s.image);
        v.support_masks.push_back(&s.mask);
    }
    v.query = &task.query.image;
    v.query_mask = with_query_mask ? &task.query.mask : nullptr;
    v.class_name = task.class_name;
    return v;
}

std::vector<int> predict_tokens(const ForwardOutput& out) { return predict_labels(out.logits); }

namespace {

Tensor mean_of(const std::vector<Tensor>& ts) {
    Tensor acc = ts[0];
    for (std::size_t i = 1; i < ts.size(); ++i) acc = add(acc, ts[i]);
    return ts.size() == 1 ? acc : scale(acc, Scalar(1) / Scalar(ts.size()));
}

Tensor complement(const Tensor& m) { return add_scalar(scale(m, Scalar(-1)), Scalar(1)); }

void finish_loss(ForwardOutput& out, const ModelConfig& cfg, const EpisodeView& view, const Tensor& reg,
                 const Tensor& dis) {
    if (!view.query_mask) return;
    out.token_gt = token_labels(*view.query_mask, cfg.encoder.patch_size);
    out.loss = total_loss(out.logits, out.token_gt, reg, dis, cfg.alpha, cfg.beta);
}

ForwardOutput forward_zeroshot(const ModelParams& params, const ModelConfig& cfg, const EmbeddingProvider& provider,
                               const EpisodeView& view) {
    const EncoderConfig& ec = cfg.encoder;
    const EnhanceOptions opts = cfg.enhance_options();
    TokenState q;
    q.x = patch_embed(*view.query, params.encoder, ec);
    q.p = init_prompts(view.class_name, provider, params.prompts, PromptInitMode::Text, false).fg;

    ForwardOutput out;
    EnhancementHook hook;
    if (cfg.use_spt) {
        hook = [&](std::size_t, std::vector<TokenState>&, TokenState& query) {
            Tensor pm = prompt_pseudo_mask(query.x, query.p, cfg.zeroshot_scale);
            FgEnhancement e = enhance_fg(query.p, query.x, pm, params.pmg, params.spt, opts);
            query.p = e.prompts;
            ++out.record.steps;
            out.record.pseudo_mask = pm;
            out.record.query_parts = std::move(e.parts);
        };
    }
    StreamOutput so = run_streams({}, q, params.encoder, ec, hook);
    out.enhancements = so.enhancements;
    out.query_tokens = so.query.x;
    out.logits = zeroshot_predict(so.query.x, so.query.p, params.zeroshot);
    finish_loss(out, cfg, view, {}, {});
    return out;
}

}  // namespace

ForwardOutput forward_episode(const ModelParams& params, const ModelConfig& cfg, const EmbeddingProvider& provider,
                              const EpisodeView& view) {
    if (!view.query) throw ContractError("forward_episode: missing query image");
    if (cfg.zeroshot) return forward_zeroshot(params, cfg, provider, view);
    const std::size_t shots = view.support_images.size();
    if (shots == 0 || view.support_masks.size() != shots) {
        throw ContractError("forward_episode: need matching support images and masks");
    }
    const EncoderConfig& ec = cfg.encoder;
    const std::size_t n_l = ec.tokens();
    const EnhanceOptions opts = cfg.enhance_options();

    TokenState q;
    q.x = patch_embed(*view.query, params.encoder, ec);
    std::vector<TokenState> s(shots);
    std::vector<Tensor> m_s(shots);
    for (std::size_t k = 0; k < shots; ++k) {
        s[k].x = patch_embed(*view.support_images[k], params.encoder, ec);
        m_s[k] = Tensor({n_l}, token_mask(*view.support_masks[k], ec.patch_size));
    }

    if (cfg.use_fg_prompts) {
        Tensor support_avg;
        if (cfg.init_mode == PromptInitMode::SupportAverage) {
            std::vector<Tensor> pooled;
            for (std::size_t k = 0; k < shots; ++k) pooled.push_back(masked_average(s[k].x, m_s[k]));
            support_avg = reshape(mean_of(pooled), {ec.d});
        }
        InitialPrompts ip =
            init_prompts(view.class_name, provider, params.prompts, cfg.init_mode, cfg.use_bg_prompts, support_avg);
        q.p = ip.fg;
        q.b = ip.bg;
    } else if (cfg.use_bg_prompts) {
        q.b = params.prompts.bg_init;
    }
    for (auto& st : s) {
        st.p = q.p;
        st.b = q.b;
    }

    ForwardOutput out;
    EnhancementHook hook;
    if (cfg.use_spt && (q.p.defined() || q.b.defined())) {
        hook = [&](std::size_t, std::vector<TokenState>& sup, TokenState& query) {
            enhancement_step(sup, query, m_s, params.pmg, params.spt, opts, &out.record);
        };
    }
    StreamOutput so = run_streams(std::move(s), std::move(q), params.encoder, ec, hook);
    out.enhancements = so.enhancements;
    out.query_tokens = so.query.x;

    // Support prototypes from masked average pooling stand in for absent prompts.
    auto prototype = [&](bool fg) {
        std::vector<Tensor> pooled;
        for (std::size_t k = 0; k < shots; ++k)
            pooled.push_back(masked_average(so.supports[k].x, fg ? m_s[k] : complement(m_s[k])));
        return mean_of(pooled);
    };
    Tensor p_bar, b_bar;
    if (cfg.use_fg_prompts) {
        std::vector<Tensor> ps;
        for (const auto& st : so.supports) ps.push_back(st.p);
        Tensor b_src = cfg.use_bg_prompts ? so.b_final : prototype(false);
        FusedPrompts f = fuse_prompts(so.query.p, mean_of(ps), b_src, params.match.lambda());
        p_bar = f.p_bar;
        b_bar = f.b_bar;
    } else {
        p_bar = prototype(true);
        b_bar = cfg.use_bg_prompts ? reshape(mean_axis(so.b_final, 0), {1, ec.d}) : prototype(false);
    }
    out.logits = match_predict(so.query.x, p_bar, b_bar, cfg.temperature);

    if (!view.query_mask) return out;
    Tensor reg, dis;
    if (cfg.use_fg_prompts && cfg.use_spt && cfg.use_pmg && cfg.n_fg >= 2 && out.record.steps > 0) {
        std::vector<Tensor> sims;
        for (const auto& parts : out.record.support_parts) sims.push_back(part_similarity(parts.masks));
        reg = scale(add(part_similarity(out.record.query_parts.masks), mean_of(sims)), Scalar(0.5));
    }
    if (cfg.use_fg_prompts && cfg.use_bg_prompts) {
        out.final_pseudo = pseudo_mask_from_supports(so.query.x, so.supports, m_s, cfg.normalize_affinity);
        std::vector<Tensor> per_support;
        for (std::size_t k = 0; k < shots; ++k) {
            const TokenState& st = so.supports[k];
            per_support.push_back(prompt_contrast_loss(st.p, st.b, st.x, m_s[k], complement(m_s[k])));
        }
        Tensor dis_q = prompt_contrast_loss(so.query.p, so.query.b, so.query.x, out.final_pseudo,
                                            complement(out.final_pseudo));
        dis = scale(add(dis_q, mean_of(per_support)), Scalar(0.5));
    }
    finish_loss(out, cfg, view, reg, dis);
    return out;
}

}  // namespace PAT_ABI
}  // namespace pat
