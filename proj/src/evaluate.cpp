#include "pat/evaluate.hpp"

#include "pat/errors.hpp"
#include "pat/trainer.hpp"

namespace pat {
inline namespace PAT_ABI {

nlohmann::json EvalProtocol::to_json() const {
    return {{"shots", shots},
            {"annotation", annotation_name(annotation)},
            {"split", split},
            {"episodes", episodes},
            {"seed", seed}};
}

nlohmann::json EvalReport::to_json() const {
    return {{"miou", miou},     {"fb_iou", fb_iou}, {"per_class", per_class}, {"episodes", episodes},
            {"protocol", protocol}, {"config", config}, {"seed", seed}};
}

SegmentationMetrics run_episodes(const Dataset& ds, const std::vector<int>& classes, SamplePool pool,
                                 const EvalProtocol& protocol, const Predictor& predict) {
    if (classes.empty()) throw ConfigError("evaluate: no classes to evaluate");
    if (protocol.episodes == 0) throw ConfigError("evaluate: episodes must be positive");
    // Separate streams keep the episode sequence identical across annotation styles.
    std::mt19937_64 rng(protocol.seed);
    std::mt19937_64 degrade_rng(protocol.seed ^ 0x9e3779b97f4a7c15ull);
    SegmentationMetrics metrics;
    for (std::size_t e = 0; e < protocol.episodes; ++e) {
        EpisodeTask task = sample_episode_for_class(ds, classes[e % classes.size()], protocol.shots, rng, pool);
        task.annotation = protocol.annotation;
        if (protocol.annotation != Annotation::Dense)
            for (auto& s : task.supports) s.mask = degrade_mask(s.mask, protocol.annotation, degrade_rng);
        const Mask pred = predict(task);
        if (pred.height != task.query.mask.height || pred.width != task.query.mask.width) {
            throw DimensionError("evaluate: prediction size differs from the query mask");
        }
        metrics.accumulate(task.class_id, pred.bits, task.query.mask.bits);
    }
    return metrics;
}

EvalReport make_report(const SegmentationMetrics& metrics, const Dataset& ds, const EvalProtocol& protocol,
                       const nlohmann::json& config) {
    EvalReport r;
    r.miou = metrics.miou();
    r.fb_iou = metrics.fb_iou();
    for (const auto& [id, counts] : metrics.per_class()) r.per_class[ds.class_by_id(id).class_name] = counts.iou();
    r.episodes = metrics.episodes();
    r.protocol = protocol.to_json();
    r.config = config;
    r.seed = protocol.seed;
    return r;
}

Predictor model_predictor(const ModelParams& params, const ModelConfig& cfg, const EmbeddingProvider& provider) {
    return [&params, cfg, &provider](const EpisodeTask& task) {
        NoGradGuard guard;
        ForwardOutput out = forward_episode(params, cfg, provider, EpisodeView::of(task, false));
        return upsample_labels(predict_tokens(out), cfg.encoder.grid(), cfg.encoder.patch_size);
    };
}

EvalReport evaluate(const ModelParams& params, const TrainConfig& cfg, const Dataset& ds, const EvalProtocol& protocol,
                    const EmbeddingProvider& provider) {
    SamplePool pool;
    std::vector<int> classes;
    if (protocol.split == "seen") {
        classes = resolve_classes(ds, cfg.seen);
        pool = SamplePool::Test;
    } else if (protocol.split == "unseen") {
        classes = resolve_classes(ds, cfg.unseen);
        pool = SamplePool::All;
    } else {
        throw ConfigError("evaluate: split must be 'seen' or 'unseen', got '" + protocol.split + "'");
    }
    if (classes.empty()) throw ConfigError("evaluate: config lists no " + protocol.split + " classes");
    const SegmentationMetrics m = run_episodes(ds, classes, pool, protocol, model_predictor(params, cfg.model, provider));
    return make_report(m, ds, protocol, to_json(cfg));
}

}  // namespace PAT_ABI
}  // namespace pat
