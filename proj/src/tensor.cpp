#include "siamcheck/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "siamcheck/error.hpp"

namespace siamcheck {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

bool all_finite(std::span<const float> values) {
    return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

namespace detail {
void TensorImpl::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
}

void TensorImpl::accumulate_grad(std::span<const float> g) {
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}
} // namespace detail

namespace {
void check_shape(const Shape& shape) {
    for (auto d : shape)
        if (d == 0) throw Error(ErrorKind::Dimension, "zero-sized axis in shape " + shape_to_string(shape));
}
} // namespace

Tensor::Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {}

Tensor::Tensor(Shape shape, float fill) : impl_(std::make_shared<detail::TensorImpl>()) {
    check_shape(shape);
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : impl_(std::make_shared<detail::TensorImpl>()) {
    check_shape(shape);
    if (shape_numel(shape) != data.size())
        throw Error(ErrorKind::Dimension, "shape " + shape_to_string(shape) + " needs " +
                                              std::to_string(shape_numel(shape)) + " values, got " +
                                              std::to_string(data.size()));
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

Tensor Tensor::scalar(float value) { return Tensor({1}, std::vector<float>{value}); }

Tensor Tensor::from(Shape shape, std::initializer_list<float> values) {
    return Tensor(std::move(shape), std::vector<float>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank())
        throw Error(ErrorKind::Dimension, "axis " + std::to_string(axis) + " out of range for shape " +
                                              shape_to_string(shape()));
    return impl_->shape[axis];
}

float Tensor::item() const {
    if (numel() != 1) throw Error(ErrorKind::Contract, "item() on tensor of shape " + shape_to_string(shape()));
    return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on)
        impl_->ensure_grad();
    else
        impl_->grad.clear();
    return *this;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return Tensor(std::move(impl));
}

} // namespace siamcheck
