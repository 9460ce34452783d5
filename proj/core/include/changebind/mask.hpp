#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "changebind/tensor.hpp"

namespace changebind {

/// Strictly binary per-pixel mask (1 = change). Values are validated on
/// construction.
class BinaryMask {
public:
    BinaryMask() = default;
    explicit BinaryMask(Shape shape);

    /// Throws DataError if any value is not 0 or 1.
    static BinaryMask from_values(Shape shape, std::vector<std::uint8_t> values);

    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }
    std::span<const std::uint8_t> values() const { return values_; }
    std::uint8_t operator[](std::int64_t i) const { return values_[static_cast<std::size_t>(i)]; }
    void set(std::int64_t i, bool change) { values_[static_cast<std::size_t>(i)] = change ? 1 : 0; }
    std::int64_t count_changed() const;

    /// Class-index tensor suitable for cross_entropy_loss.
    Tensor to_labels(std::optional<DType> dtype = std::nullopt) const;

    bool operator==(const BinaryMask&) const = default;

private:
    Shape shape_;
    std::vector<std::uint8_t> values_;
};

} // namespace changebind
