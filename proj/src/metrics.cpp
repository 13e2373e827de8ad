#include "pat/metrics.hpp"

#include "pat/errors.hpp"

namespace pat {

void SegmentationMetrics::accumulate(int class_id, std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
    if (pred.size() != gt.size()) throw DimensionError("metrics: prediction and ground truth sizes differ");
    IouCounts fg, bg;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, g = gt[i] != 0;
        fg.intersection += (p && g);
        fg.union_ += (p || g);
        bg.intersection += (!p && !g);
        bg.union_ += (!p || !g);
    }
    per_class_[class_id] += fg;
    fg_ += fg;
    bg_ += bg;
    ++episodes_;
}

void SegmentationMetrics::merge(const SegmentationMetrics& other) {
    for (const auto& [id, c] : other.per_class_) per_class_[id] += c;
    fg_ += other.fg_;
    bg_ += other.bg_;
    episodes_ += other.episodes_;
}

double SegmentationMetrics::class_iou(int class_id) const {
    auto it = per_class_.find(class_id);
    if (it == per_class_.end()) throw LookupError("metrics: no episodes for class " + std::to_string(class_id));
    return it->second.iou();
}

double SegmentationMetrics::miou() const {
    if (episodes_ == 0) throw ContractError("metrics: no episodes accumulated");
    double s = 0;
    for (const auto& [id, c] : per_class_) s += c.iou();
    return s / double(per_class_.size());
}

double SegmentationMetrics::fb_iou() const {
    if (episodes_ == 0) throw ContractError("metrics: no episodes accumulated");
    return 0.5 * (fg_.iou() + bg_.iou());
}

}  // namespace pat
