#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace protoseg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorImpl;

// One recorded operation on the tape. `backward` reads the gradient of the
// produced tensor and accumulates into the inputs that track gradients.
struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void(const TensorImpl& output)> backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<Node> grad_fn;

    void accumulate_grad(std::span<const double> g);
    std::span<double> grad_buffer();  // allocates zeros on demand
};

}  // namespace detail

/// Dense row-major array of doubles with optional reverse-mode gradient
/// tracking. Copies share storage; use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor full(Shape shape, double value) { return Tensor(std::move(shape), value); }
    static Tensor scalar(double value) { return Tensor(Shape{1}, value); }
    static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng);

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return data().size(); }

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Reverse sweep from this scalar; accumulates into every tracked ancestor.
    void backward() const;

    Tensor detach() const;
    Tensor clone() const;
    Tensor reshape(Shape shape) const;

    bool all_finite() const;
    /// Throws Error(NonFinite) naming `what` if any value is NaN or Inf.
    void check_finite(const std::string& what) const;

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
    static Tensor from_impl(std::shared_ptr<detail::TensorImpl> impl);

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Gradient recording is on by default and scoped per thread.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

namespace detail {

// Builds the result of an op. Attaches `backward` only when recording is on
// and some input tracks gradients.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward);

}  // namespace detail

}  // namespace protoseg
