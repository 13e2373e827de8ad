#include "pat/gradcheck_suite.hpp"

#include <chrono>

#include "pat/gradcheck.hpp"
#include "pat/model.hpp"

namespace pat::suite {

namespace {

ModelConfig tiny_config(const SuiteOptions& opts) {
    ModelConfig c;
    c.encoder.image_size = 16;
    c.encoder.patch_size = 4;
    c.encoder.d = 16;
    c.encoder.n_blocks = 3;
    c.encoder.n_heads = 2;
    c.encoder.mlp_ratio = 2;
    c.encoder.enhanced_blocks = 2;
    c.n_fg = 4;
    c.n_bg = 4;
    c.text_dim = 16;
    c.suppression.enabled = opts.suppression;
    c.zeroshot = opts.zeroshot;
    return c;
}

}  // namespace

SuiteResult full_loss_gradcheck(const SuiteOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelConfig cfg = tiny_config(opts);
    ModelParams params = ModelParams::make(cfg, opts.seed);
    const EmbeddingProvider provider = EmbeddingProvider::stub(cfg.text_dim);
    const Dataset ds = generate_dataset(4, 3, 16, opts.seed);
    std::mt19937_64 rng(opts.seed);
    const EpisodeTask task = sample_episode_for_class(ds, 0, 1, rng);
    const EpisodeView view = EpisodeView::of(task);

    auto objective = [&] { return forward_episode(params, cfg, provider, view).loss.total; };
    GradCheckOptions o;
    o.step = opts.step;
    o.coords_per_tensor = opts.coords_per_tensor;
    o.seed = opts.seed;
    const GradCheckResult r = finite_diff_check(objective, params.store.entries(), o);

    SuiteResult out;
    out.max_rel_error = r.max_rel_error;
    out.coords = r.coords;
    out.worst = r.worst;
    out.worst_analytic = r.worst_analytic;
    out.worst_numeric = r.worst_numeric;
    for (const auto& g : r.groups) out.groups.push_back({g.name, g.coords, g.max_rel_error});
    {
        NoGradGuard guard;
        out.loss = double(objective().item());
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace pat::suite
