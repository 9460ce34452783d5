#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "changebind/error.hpp"

namespace changebind {

enum class DType { f32, f64 };

using Shape = std::vector<std::int64_t>;
using Buffer = std::variant<std::vector<float>, std::vector<double>>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);
std::string_view to_string(DType dtype) noexcept;

/// Precision used for tensors created without an explicit dtype. 32-bit by
/// default; gradient checking switches to 64-bit through DTypeScope.
DType default_dtype() noexcept;
void set_default_dtype(DType dtype) noexcept;

class DTypeScope {
public:
    explicit DTypeScope(DType dtype) : previous_(default_dtype()) { set_default_dtype(dtype); }
    ~DTypeScope() { set_default_dtype(previous_); }
    DTypeScope(const DTypeScope&) = delete;
    DTypeScope& operator=(const DTypeScope&) = delete;

private:
    DType previous_;
};

bool grad_enabled() noexcept;

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Tensor;
struct TensorImpl;

/// Accumulates the gradient of one op output into the gradients of its
/// inputs. `grad_in[i]` is null when input i does not require a gradient.
using BackwardFn = std::function<void(const Buffer& grad_out, std::span<Buffer* const> grad_in)>;

struct GradFn {
    std::string name;
    std::vector<Tensor> inputs;
    BackwardFn apply;
};

/// Handle to a shared N-dimensional array. Copies of a Tensor alias the same
/// storage; use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, std::optional<DType> dtype = std::nullopt);
    static Tensor full(Shape shape, double value, std::optional<DType> dtype = std::nullopt);
    static Tensor from_values(Shape shape, std::span<const double> values,
                              std::optional<DType> dtype = std::nullopt);
    static Tensor from_values(Shape shape, std::initializer_list<double> values,
                              std::optional<DType> dtype = std::nullopt);
    static Tensor from_buffer(Shape shape, Buffer data);
    static Tensor scalar(double value, std::optional<DType> dtype = std::nullopt);

    /// Builds an op output. The backward function is attached only when
    /// recording is enabled and at least one input requires a gradient.
    static Tensor make_result(Shape shape, Buffer data, std::string name, std::vector<Tensor> inputs,
                              BackwardFn backward);

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const;
    int rank() const;
    std::int64_t dim(int axis) const;
    std::int64_t numel() const;
    DType dtype() const;

    const Buffer& buffer() const;
    Buffer& mutable_buffer();

    template <class T>
    std::span<const T> data() const {
        return std::get<std::vector<T>>(buffer());
    }
    template <class T>
    std::span<T> mutable_data() {
        return std::get<std::vector<T>>(mutable_buffer());
    }

    double item() const;
    double at(std::int64_t flat_index) const;
    void set(std::int64_t flat_index, double value);
    std::vector<double> to_vector() const;

    bool requires_grad() const;
    Tensor& requires_grad_(bool value = true);
    bool is_leaf() const;
    const GradFn* grad_fn() const;

    bool has_grad() const;
    /// Gradient as a detached tensor; zeros when none has been populated.
    Tensor grad() const;
    std::vector<double> grad_vector() const;
    void zero_grad();

    /// Reverse-mode sweep from this scalar. Throws UsageError for a
    /// non-scalar loss, and when any reachable leaf still holds a gradient
    /// from an earlier call that was not reset with zero_grad().
    void backward() const;

    Tensor detach() const;
    Tensor clone() const;
    Tensor to(DType dtype) const;

    bool same_as(const Tensor& other) const noexcept { return impl_ == other.impl_; }
    const TensorImpl* impl() const noexcept { return impl_.get(); }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    TensorImpl& checked() const;

    std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
    Shape shape;
    Buffer data;
    std::optional<Buffer> grad;
    bool requires_grad = false;
    std::shared_ptr<GradFn> grad_fn;
};

/// Drops the gradients of every leaf reachable from `root`.
void reset_graph_grads(const Tensor& root);

/// True when both tensors have equal shape and bitwise-identical values.
bool bitwise_equal(const Tensor& a, const Tensor& b);

/// Throws NumericError naming `where` if any element is NaN or infinite.
void check_finite(const Tensor& t, const std::string& where);

} // namespace changebind
