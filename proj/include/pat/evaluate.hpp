#pragma once

#include <functional>
#include <map>
#include <string>

#include "json.hpp"
#include "pat/config.hpp"
#include "pat/metrics.hpp"

namespace pat {
inline namespace PAT_ABI {

struct EvalProtocol {
    int shots = 1;
    Annotation annotation = Annotation::Dense;
    std::string split = "unseen";  // "seen" draws test-split samples, "unseen" draws every sample
    std::size_t episodes = 200;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

struct EvalReport {
    double miou = 0;
    double fb_iou = 0;
    std::map<std::string, double> per_class;
    std::size_t episodes = 0;
    nlohmann::json protocol;
    nlohmann::json config;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

// Full-resolution binary prediction for the episode's query.
using Predictor = std::function<Mask(const EpisodeTask&)>;

// Round-robin over `classes`; support masks degraded per the protocol before
// the predictor sees them.
SegmentationMetrics run_episodes(const Dataset& ds, const std::vector<int>& classes, SamplePool pool,
                                 const EvalProtocol& protocol, const Predictor& predict);

EvalReport make_report(const SegmentationMetrics& metrics, const Dataset& ds, const EvalProtocol& protocol,
                       const nlohmann::json& config);

// Model predictor: forward pass without gradients, nearest upsampling.
Predictor model_predictor(const ModelParams& params, const ModelConfig& cfg, const EmbeddingProvider& provider);

EvalReport evaluate(const ModelParams& params, const TrainConfig& cfg, const Dataset& ds, const EvalProtocol& protocol,
                    const EmbeddingProvider& provider);

}  // namespace PAT_ABI
}  // namespace pat
