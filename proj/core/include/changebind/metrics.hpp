#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "changebind/mask.hpp"

namespace changebind {

/// Pixel tallies with change as the positive class.
struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& other);
    bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);
/// Raw-buffer variant; throws DataError for values other than 0 and 1.
ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

struct Scores {
    double f1 = 0.0;
    double iou = 0.0;
    double oa = 0.0;
};

/// Change-class F1 = 2tp / (2tp + fp + fn), IoU = tp / (tp + fp + fn),
/// OA = (tp + tn) / total. With tp = fp = fn = 0 (nothing to find, nothing
/// predicted) F1 and IoU are 1. Throws UsageError on an empty tally.
Scores scores(const ConfusionCounts& counts);

/// One line: split=<s> n_images=<n> tp=.. fp=.. fn=.. tn=.. f1=.. iou=.. oa=..
/// with scores at four decimals.
std::string format_metrics_report(const std::string& split, std::int64_t n_images, const ConfusionCounts& counts);

} // namespace changebind
