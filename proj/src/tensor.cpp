#include "protoseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "protoseg/error.hpp"

namespace protoseg {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::NotScalar: return "NotScalar";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::EmptyForeground: return "EmptyForeground";
        case ErrorKind::EmptyDescriptorSet: return "EmptyDescriptorSet";
        case ErrorKind::EmptyList: return "EmptyList";
        case ErrorKind::WrongLevelCount: return "WrongLevelCount";
        case ErrorKind::ImageTooSmall: return "ImageTooSmall";
        case ErrorKind::MissingGradient: return "MissingGradient";
        case ErrorKind::IndivisibleClassCount: return "IndivisibleClassCount";
        case ErrorKind::InsufficientSamples: return "InsufficientSamples";
        case ErrorKind::UnknownClass: return "UnknownClass";
        case ErrorKind::FoldOverlap: return "FoldOverlap";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

thread_local bool t_grad_enabled = true;

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw Error(ErrorKind::ShapeMismatch, "tensor shape must have at least one dimension");
    for (std::size_t d : shape) {
        if (d == 0) throw Error(ErrorKind::ShapeMismatch, "zero-sized dimension in " + shape_to_string(shape));
    }
}

}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace detail {

void TensorImpl::accumulate_grad(std::span<const double> g) {
    auto buf = grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

std::span<double> TensorImpl::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    if (grad_enabled()) {
        bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
        if (any) {
            auto node = std::make_shared<Node>();
            for (auto& t : inputs) node->inputs.push_back(t.impl());
            node->backward = std::move(backward);
            impl->grad_fn = std::move(node);
            impl->requires_grad = true;
        }
    }
    return Tensor::from_impl(std::move(impl));
}

}  // namespace detail

Tensor::Tensor(Shape shape, double fill) {
    validate_shape(shape);
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) {
    validate_shape(shape);
    if (shape_numel(shape) != data.size()) {
        throw Error(ErrorKind::ShapeMismatch, "data length " + std::to_string(data.size()) +
                                                  " does not match shape " + shape_to_string(shape));
    }
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    // 53-bit mantissa draw keeps the stream identical across standard libraries.
    for (double& v : t.mutable_data()) {
        double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = lo + (hi - lo) * u;
    }
    return t;
}

Tensor Tensor::from_impl(std::shared_ptr<detail::TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= impl_->shape.size()) throw Error(ErrorKind::ShapeMismatch, "axis out of range");
    return impl_->shape[axis];
}

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
    if (numel() != 1) throw Error(ErrorKind::NotScalar, "item() on tensor of shape " + shape_to_string(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const Shape& s = shape();
    if (index.size() != s.size()) throw Error(ErrorKind::ShapeMismatch, "index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= s[axis]) throw Error(ErrorKind::ShapeMismatch, "index out of range");
        flat = flat * s[axis] + i;
        ++axis;
    }
    return impl_->data[flat];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    impl_->requires_grad = value;
    return *this;
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.clear(); }

void Tensor::backward() const {
    if (numel() != 1) throw Error(ErrorKind::NotScalar, "backward() requires a scalar, got " + shape_to_string(shape()));
    if (!requires_grad()) return;

    // Iterative post-order DFS gives a topological order of the tape.
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> visited;
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack{{impl_.get(), 0}};
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto* fn = node->grad_fn.get();
        if (fn && next < fn->inputs.size()) {
            detail::TensorImpl* child = fn->inputs[next++].get();
            if (child->requires_grad && child->grad_fn && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    impl_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorImpl* node = *it;
        if (node->grad_fn && !node->grad.empty()) node->grad_fn->backward(*node);
    }
}

Tensor Tensor::detach() const {
    return Tensor(shape(), std::vector<double>(impl_->data));
}

Tensor Tensor::clone() const {
    Tensor t = detach();
    t.impl_->requires_grad = impl_->requires_grad && !impl_->grad_fn;
    return t;
}

Tensor Tensor::reshape(Shape new_shape) const {
    validate_shape(new_shape);
    if (shape_numel(new_shape) != numel()) {
        throw Error(ErrorKind::ShapeMismatch, "cannot reshape " + shape_to_string(shape()) + " to " +
                                                  shape_to_string(new_shape));
    }
    auto src = impl_;
    return detail::make_result(std::move(new_shape), impl_->data, {*this}, [src](const detail::TensorImpl& out) {
        if (src->requires_grad) src->accumulate_grad(out.grad);
    });
}

bool Tensor::all_finite() const {
    return std::all_of(impl_->data.begin(), impl_->data.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::check_finite(const std::string& what) const {
    if (!all_finite()) throw Error(ErrorKind::NonFinite, what + " contains NaN or Inf");
}

}  // namespace protoseg
