#include "changebind/mask.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "changebind/error.hpp"

namespace changebind {

BinaryMask::BinaryMask(Shape shape) : shape_(std::move(shape)), values_(static_cast<std::size_t>(shape_numel(shape_)), 0) {}

BinaryMask BinaryMask::from_values(Shape shape, std::vector<std::uint8_t> values) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw ShapeError(fmt::format("mask shape {} needs {} values, got {}", shape_string(shape),
                                     shape_numel(shape), values.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] > 1) {
            throw DataError(fmt::format("mask value {} at index {} is not binary", values[i], i));
        }
    }
    BinaryMask m;
    m.shape_ = std::move(shape);
    m.values_ = std::move(values);
    return m;
}

std::int64_t BinaryMask::count_changed() const {
    return std::count(values_.begin(), values_.end(), std::uint8_t{1});
}

Tensor BinaryMask::to_labels(std::optional<DType> dtype) const {
    std::vector<double> v(values_.begin(), values_.end());
    return Tensor::from_values(shape_, v, dtype);
}

} // namespace changebind
