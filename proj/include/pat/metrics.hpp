#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

namespace pat {

struct IouCounts {
    std::uint64_t intersection = 0;
    std::uint64_t union_ = 0;

    // Empty-vs-empty counts as a perfect match.
    double iou() const { return union_ == 0 ? 1.0 : double(intersection) / double(union_); }
    IouCounts& operator+=(const IouCounts& o) {
        intersection += o.intersection;
        union_ += o.union_;
        return *this;
    }
};

// Accumulates intersections and unions over episodes. Per-class FG counts
// feed mIoU; global FG and BG counts feed FB-IoU.
class SegmentationMetrics {
   public:
    // pred and gt are binary masks (nonzero = FG) of equal length.
    void accumulate(int class_id, std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
    void merge(const SegmentationMetrics& other);

    std::size_t episodes() const { return episodes_; }
    const std::map<int, IouCounts>& per_class() const { return per_class_; }
    const IouCounts& foreground() const { return fg_; }
    const IouCounts& background() const { return bg_; }

    double class_iou(int class_id) const;
    double miou() const;
    double fb_iou() const;

   private:
    std::map<int, IouCounts> per_class_;
    IouCounts fg_;
    IouCounts bg_;
    std::size_t episodes_ = 0;
};

}  // namespace pat
