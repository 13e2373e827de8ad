#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pat/config.hpp"

namespace pat {
inline namespace PAT_ABI {

// v = mu * v + g; p -= lr * v. Tensors without a gradient are left alone.
// With clip > 0 the gradient is first rescaled so its global L2 norm is at
// most clip.
class SgdMomentum {
   public:
    SgdMomentum(double lr, double momentum, double clip = 0) : lr_(lr), momentum_(momentum), clip_(clip) {}
    void step(ParamStore& store);
    double last_grad_norm() const { return last_norm_; }

   private:
    double lr_;
    double momentum_;
    double clip_;
    double last_norm_ = 0;
    std::vector<std::vector<Scalar>> velocity_;
};

struct LossRecord {
    std::size_t episode = 0;
    int class_id = 0;
    double total = 0;
    double ce = 0;
    double reg = 0;
    double dis = 0;
};

using TrainCallback = std::function<void(const LossRecord&)>;

// Class ids for names; unknown names raise ConfigError listing them.
std::vector<int> resolve_classes(const Dataset& ds, const std::vector<std::string>& names);

// Episodic training on the seen classes (all non-unseen classes when the
// seen list is empty), drawing from train-split samples.
std::vector<LossRecord> train(ModelParams& params, const TrainConfig& cfg, const Dataset& ds,
                              const EmbeddingProvider& provider, const TrainCallback& on_episode = {});

// The same fixed episode for `steps` updates, no augmentation.
std::vector<LossRecord> train_on_episode(ModelParams& params, const TrainConfig& cfg, const EpisodeTask& task,
                                         const EmbeddingProvider& provider, std::size_t steps,
                                         const TrainCallback& on_episode = {});

void write_loss_curve(const std::string& path, const std::vector<LossRecord>& curve);

}  // namespace PAT_ABI
}  // namespace pat
