#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace siamcheck {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad; // empty until allocated
    bool requires_grad = false;
    // Set by sigmoid: the pre-activation this tensor was computed from. The
    // loss uses it to differentiate through saturated outputs.
    std::shared_ptr<TensorImpl> logits;

    void accumulate_grad(std::span<const float> g);
    void ensure_grad();
};
} // namespace detail

/// N-dimensional float32 array, row-major, channels-last for images.
///
/// A Tensor is a handle: copies share storage, which is what lets the tape
/// route gradients back to parameters. Use clone() for an independent copy.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor scalar(float value);
    static Tensor from(Shape shape, std::initializer_list<float> values);

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return impl_->data.size(); }

    std::span<float> data() { return impl_->data; }
    std::span<const float> data() const { return impl_->data; }
    float operator[](std::size_t i) const { return impl_->data[i]; }
    float item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    /// Marks the tensor as a gradient leaf; allocates a zeroed grad buffer.
    Tensor& set_requires_grad(bool on);
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<float> grad() { return impl_->grad; }
    std::span<const float> grad() const { return impl_->grad; }
    void zero_grad();

    Tensor clone() const;
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;
};

bool all_finite(std::span<const float> values);

} // namespace siamcheck
