#include "changebind/metrics.hpp"

#include <fmt/format.h>

#include "changebind/error.hpp"

namespace changebind {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    tn += other.tn;
    return *this;
}

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.shape() != gt.shape()) {
        throw ShapeError(fmt::format("confusion: prediction {} and ground truth {} differ",
                                     shape_string(pred.shape()), shape_string(gt.shape())));
    }
    return confusion(pred.values(), gt.values());
}

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
    if (pred.size() != gt.size()) {
        throw ShapeError(fmt::format("confusion: {} predicted pixels vs {} labelled", pred.size(), gt.size()));
    }
    std::int64_t cells[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] > 1 || gt[i] > 1) {
            throw DataError(fmt::format("confusion: non-binary value at pixel {}", i));
        }
        ++cells[pred[i]][gt[i]];
    }
    return {cells[1][1], cells[1][0], cells[0][1], cells[0][0]};
}

Scores scores(const ConfusionCounts& c) {
    if (c.total() <= 0) {
        throw UsageError("scores: no pixels evaluated");
    }
    Scores s;
    const auto errors = c.fp + c.fn;
    if (c.tp + errors == 0) {
        s.f1 = 1.0;
        s.iou = 1.0;
    } else {
        s.f1 = 2.0 * c.tp / static_cast<double>(2 * c.tp + errors);
        s.iou = c.tp / static_cast<double>(c.tp + errors);
    }
    s.oa = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    return s;
}

std::string format_metrics_report(const std::string& split, std::int64_t n_images, const ConfusionCounts& c) {
    const Scores s = scores(c);
    return fmt::format("split={} n_images={} tp={} fp={} fn={} tn={} f1={:.4f} iou={:.4f} oa={:.4f}", split,
                       n_images, c.tp, c.fp, c.fn, c.tn, s.f1, s.iou, s.oa);
}

} // namespace changebind
