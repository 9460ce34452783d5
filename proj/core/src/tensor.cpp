#include "changebind/tensor.hpp"

#include <cmath>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

#include "kernel_util.hpp"

namespace changebind {

using detail::dispatch;
using detail::TypeTag;

namespace {

DType g_default_dtype = DType::f32;
thread_local bool t_grad_enabled = true;

} // namespace

std::string_view to_string(ErrorCategory category) noexcept {
    switch (category) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::io: return "io";
    }
    return "unknown";
}

std::string_view to_string(DType dtype) noexcept {
    return dtype == DType::f32 ? "f32" : "f64";
}

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    return fmt::format("[{}]", fmt::join(shape, ", "));
}

DType default_dtype() noexcept { return g_default_dtype; }
void set_default_dtype(DType dtype) noexcept { g_default_dtype = dtype; }

bool grad_enabled() noexcept { return t_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace {

void validate_shape(const Shape& shape) {
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] <= 0) {
            throw ShapeError(fmt::format("shape {} has non-positive extent on axis {}",
                                         shape_string(shape), i),
                             static_cast<int>(i));
        }
    }
}

std::int64_t buffer_size(const Buffer& b) {
    return std::visit([](const auto& v) { return static_cast<std::int64_t>(v.size()); }, b);
}

DType buffer_dtype(const Buffer& b) {
    return std::holds_alternative<std::vector<float>>(b) ? DType::f32 : DType::f64;
}

} // namespace

Tensor Tensor::from_buffer(Shape shape, Buffer data) {
    validate_shape(shape);
    if (shape_numel(shape) != buffer_size(data)) {
        throw ShapeError(fmt::format("shape {} needs {} values, got {}", shape_string(shape),
                                     shape_numel(shape), buffer_size(data)));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, std::optional<DType> dtype) {
    validate_shape(shape);
    const auto n = shape_numel(shape);
    return from_buffer(std::move(shape), detail::make_buffer(dtype.value_or(default_dtype()), n));
}

Tensor Tensor::full(Shape shape, double value, std::optional<DType> dtype) {
    Tensor t = zeros(std::move(shape), dtype);
    std::visit([value](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::fill(v.begin(), v.end(), static_cast<T>(value));
    }, t.mutable_buffer());
    return t;
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, std::optional<DType> dtype) {
    validate_shape(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw ShapeError(fmt::format("shape {} needs {} values, got {}", shape_string(shape),
                                     shape_numel(shape), values.size()));
    }
    const DType dt = dtype.value_or(default_dtype());
    Buffer data = dispatch(dt, [&]<class T>(TypeTag<T>) -> Buffer {
        return std::vector<T>(values.begin(), values.end());
    });
    return from_buffer(std::move(shape), std::move(data));
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values, std::optional<DType> dtype) {
    return from_values(std::move(shape), std::span<const double>(values.begin(), values.size()), dtype);
}

Tensor Tensor::scalar(double value, std::optional<DType> dtype) {
    return full({1}, value, dtype);
}

Tensor Tensor::make_result(Shape shape, Buffer data, std::string name, std::vector<Tensor> inputs,
                           BackwardFn backward) {
    Tensor out = from_buffer(std::move(shape), std::move(data));
    if (!grad_enabled()) {
        return out;
    }
    bool any = false;
    for (const auto& in : inputs) {
        any = any || in.requires_grad();
    }
    if (any) {
        out.impl_->requires_grad = true;
        out.impl_->grad_fn = std::make_shared<GradFn>(
            GradFn{std::move(name), std::move(inputs), std::move(backward)});
    }
    return out;
}

TensorImpl& Tensor::checked() const {
    if (!impl_) {
        throw UsageError("operation on an undefined tensor");
    }
    return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }
int Tensor::rank() const { return static_cast<int>(checked().shape.size()); }

std::int64_t Tensor::dim(int axis) const {
    const int a = detail::normalize_axis(axis, rank(), "dim");
    return checked().shape[static_cast<std::size_t>(a)];
}

std::int64_t Tensor::numel() const { return shape_numel(checked().shape); }
DType Tensor::dtype() const { return buffer_dtype(checked().data); }
const Buffer& Tensor::buffer() const { return checked().data; }
Buffer& Tensor::mutable_buffer() { return checked().data; }

double Tensor::item() const {
    if (numel() != 1) {
        throw UsageError(fmt::format("item() on tensor of shape {}", shape_string(shape())));
    }
    return at(0);
}

double Tensor::at(std::int64_t flat_index) const {
    return std::visit([flat_index](const auto& v) { return static_cast<double>(v.at(flat_index)); },
                      buffer());
}

void Tensor::set(std::int64_t flat_index, double value) {
    std::visit([&](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        v.at(flat_index) = static_cast<T>(value);
    }, mutable_buffer());
}

std::vector<double> Tensor::to_vector() const {
    return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, buffer());
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::requires_grad_(bool value) {
    auto& impl = checked();
    if (impl.grad_fn) {
        throw UsageError("requires_grad_ is only valid on leaf tensors");
    }
    impl.requires_grad = value;
    return *this;
}

bool Tensor::is_leaf() const { return !checked().grad_fn; }
const GradFn* Tensor::grad_fn() const { return checked().grad_fn.get(); }
bool Tensor::has_grad() const { return checked().grad.has_value(); }

Tensor Tensor::grad() const {
    const auto& impl = checked();
    if (!impl.grad) {
        return zeros(impl.shape, dtype());
    }
    return from_buffer(impl.shape, *impl.grad);
}

std::vector<double> Tensor::grad_vector() const { return grad().to_vector(); }
void Tensor::zero_grad() { checked().grad.reset(); }

Tensor Tensor::detach() const {
    const auto& impl = checked();
    return from_buffer(impl.shape, impl.data);
}

Tensor Tensor::clone() const {
    Tensor t = detach();
    t.impl_->requires_grad = impl_->requires_grad && is_leaf();
    return t;
}

Tensor Tensor::to(DType target) const {
    if (target == dtype()) {
        return detach();
    }
    Buffer out = dispatch(target, [&]<class T>(TypeTag<T>) -> Buffer {
        return std::visit([](const auto& v) { return std::vector<T>(v.begin(), v.end()); }, buffer());
    });
    return from_buffer(shape(), std::move(out));
}

void Tensor::backward() const {
    const auto& root = checked();
    if (numel() != 1) {
        throw UsageError(fmt::format("backward needs a scalar loss, got shape {}", shape_string(root.shape)));
    }
    if (!root.requires_grad) {
        throw UsageError("backward on a tensor that does not require grad");
    }

    // Iterative post-order DFS; reversed it is a valid reverse-mode schedule.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto* fn = node->grad_fn.get();
        if (fn && next < fn->inputs.size()) {
            TensorImpl* child = fn->inputs[next++].impl_.get();
            if (child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    for (auto* node : order) {
        if (!node->grad_fn && node->grad) {
            throw UsageError("backward called again without resetting gradients (call zero_grad first)");
        }
    }

    std::unordered_map<TensorImpl*, Buffer> grads;
    grads.emplace(impl_.get(), detail::make_buffer(dtype(), 1));
    std::visit([](auto& v) { v[0] = 1; }, grads.at(impl_.get()));

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        auto found = grads.find(node);
        if (found == grads.end()) {
            continue;
        }
        if (!node->grad_fn) {
            node->grad = std::move(found->second);
            grads.erase(found);
            continue;
        }
        const auto& fn = *node->grad_fn;
        std::vector<Buffer*> grad_in(fn.inputs.size(), nullptr);
        for (std::size_t i = 0; i < fn.inputs.size(); ++i) {
            TensorImpl* in = fn.inputs[i].impl_.get();
            if (!in->requires_grad) {
                continue;
            }
            auto slot = grads.find(in);
            if (slot == grads.end()) {
                slot = grads.emplace(in, detail::make_buffer(buffer_dtype(in->data), shape_numel(in->shape))).first;
            }
            grad_in[i] = &slot->second;
        }
        fn.apply(found->second, grad_in);
        grads.erase(node);
    }
}

void reset_graph_grads(const Tensor& root) {
    if (!root.defined()) {
        return;
    }
    std::vector<const TensorImpl*> stack{root.impl()};
    std::unordered_set<const TensorImpl*> visited{root.impl()};
    while (!stack.empty()) {
        const TensorImpl* node = stack.back();
        stack.pop_back();
        if (!node->grad_fn) {
            const_cast<TensorImpl*>(node)->grad.reset();
            continue;
        }
        for (const auto& in : node->grad_fn->inputs) {
            if (visited.insert(in.impl()).second) {
                stack.push_back(in.impl());
            }
        }
    }
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || a.dtype() != b.dtype()) {
        return false;
    }
    return std::visit([&](const auto& va) {
        using V = std::decay_t<decltype(va)>;
        const auto& vb = std::get<V>(b.buffer());
        return std::memcmp(va.data(), vb.data(), va.size() * sizeof(typename V::value_type)) == 0;
    }, a.buffer());
}

void check_finite(const Tensor& t, const std::string& where) {
    std::visit([&](const auto& v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i])) {
                throw NumericError(fmt::format("non-finite value {} at index {} in {}",
                                               static_cast<double>(v[i]), i, where));
            }
        }
    }, t.buffer());
}

} // namespace changebind
