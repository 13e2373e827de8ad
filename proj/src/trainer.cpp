#include "pat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

void SgdMomentum::step(ParamStore& store) {
    if (velocity_.size() != store.size()) {
        velocity_.assign(store.size(), {});
        for (std::size_t i = 0; i < store.size(); ++i) velocity_[i].assign(store.entries()[i].tensor.numel(), 0);
    }
    double sq = 0;
    for (const auto& e : store.entries())
        for (Scalar g : e.tensor.grad()) sq += double(g) * double(g);
    last_norm_ = std::sqrt(sq);
    const Scalar g_scale = clip_ > 0 && last_norm_ > clip_ ? Scalar(clip_ / last_norm_) : Scalar(1);
    const Scalar lr = Scalar(lr_), mu = Scalar(momentum_);
    for (std::size_t i = 0; i < store.size(); ++i) {
        Tensor t = store.entries()[i].tensor;
        if (!t.has_grad()) continue;
        auto g = t.grad();
        auto p = t.data();
        auto& v = velocity_[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = mu * v[j] + g_scale * g[j];
            p[j] -= lr * v[j];
        }
    }
}

std::vector<int> resolve_classes(const Dataset& ds, const std::vector<std::string>& names) {
    std::vector<int> ids;
    std::string unknown;
    for (const auto& n : names) {
        auto it = std::find_if(ds.classes.begin(), ds.classes.end(), [&](const ShapeClass& c) { return c.class_name == n; });
        if (it != ds.classes.end()) {
            ids.push_back(it->class_id);
        } else {
            unknown += (unknown.empty() ? "" : ", ") + n;
        }
    }
    if (!unknown.empty()) throw ConfigError("unknown classes: " + unknown);
    return ids;
}

namespace {

std::string norm_report(const ParamStore& store) {
    std::vector<std::pair<double, std::string>> norms;
    for (const auto& e : store.entries()) {
        double s = 0;
        for (Scalar v : e.tensor.data()) s += double(v) * double(v);
        norms.emplace_back(std::sqrt(s), e.name);
    }
    std::sort(norms.rbegin(), norms.rend());
    std::ostringstream os;
    for (std::size_t i = 0; i < norms.size(); ++i) os << (i ? ", " : "") << norms[i].second << "=" << norms[i].first;
    return os.str();
}

double value_or_zero(const Tensor& t) { return t.defined() ? double(t.item()) : 0.0; }

LossRecord step_once(ModelParams& params, const TrainConfig& cfg, const EmbeddingProvider& provider,
                     const EpisodeTask& task, SgdMomentum& opt, std::size_t episode) {
    LossRecord rec;
    rec.episode = episode;
    rec.class_id = task.class_id;
    try {
        params.store.zero_grad();
        ForwardOutput out = forward_episode(params, cfg.model, provider, EpisodeView::of(task));
        rec.total = out.loss.total.item();
        rec.ce = out.loss.ce.item();
        rec.reg = value_or_zero(out.loss.reg);
        rec.dis = value_or_zero(out.loss.dis);
        if (!std::isfinite(rec.total)) throw NumericError("loss is not finite");
        backward(out.loss.total);
        opt.step(params.store);
    } catch (const NumericError& e) {
        throw NumericError("training aborted at episode " + std::to_string(episode) + ": " + e.what() +
                           "; parameter norms: " + norm_report(params.store));
    }
    return rec;
}

}  // namespace

std::vector<LossRecord> train(ModelParams& params, const TrainConfig& cfg, const Dataset& ds,
                              const EmbeddingProvider& provider, const TrainCallback& on_episode) {
    cfg.validate();
    std::vector<int> classes;
    if (cfg.seen.empty()) {
        const std::vector<int> unseen = resolve_classes(ds, cfg.unseen);
        for (const auto& c : ds.classes)
            if (std::find(unseen.begin(), unseen.end(), c.class_id) == unseen.end()) classes.push_back(c.class_id);
    } else {
        classes = resolve_classes(ds, cfg.seen);
    }
    if (classes.empty()) throw ConfigError("train: no seen classes");
    std::mt19937_64 rng(cfg.seed);
    SgdMomentum opt(cfg.lr, cfg.momentum, cfg.grad_clip);
    std::vector<LossRecord> curve;
    curve.reserve(cfg.episodes);
    for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
        EpisodeTask task = sample_episode(ds, classes, cfg.shots, rng, SamplePool::Train);
        if (cfg.augment) {
            for (auto& s : task.supports) s = random_crop(s, cfg.crop_min_scale, rng);
            task.query = random_crop(task.query, cfg.crop_min_scale, rng);
        }
        curve.push_back(step_once(params, cfg, provider, task, opt, ep));
        if (on_episode) on_episode(curve.back());
    }
    return curve;
}

std::vector<LossRecord> train_on_episode(ModelParams& params, const TrainConfig& cfg, const EpisodeTask& task,
                                         const EmbeddingProvider& provider, std::size_t steps,
                                         const TrainCallback& on_episode) {
    cfg.validate();
    SgdMomentum opt(cfg.lr, cfg.momentum, cfg.grad_clip);
    std::vector<LossRecord> curve;
    for (std::size_t i = 0; i < steps; ++i) {
        curve.push_back(step_once(params, cfg, provider, task, opt, i));
        if (on_episode) on_episode(curve.back());
    }
    return curve;
}

void write_loss_curve(const std::string& path, const std::vector<LossRecord>& curve) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write loss curve " + path);
    out << "episode,class_id,total,ce,reg,dis\n";
    out.precision(9);
    for (const auto& r : curve)
        out << r.episode << ',' << r.class_id << ',' << r.total << ',' << r.ce << ',' << r.reg << ',' << r.dis << '\n';
}

}  // namespace PAT_ABI
}  // namespace pat
