#include "siamcheck/tape.hpp"

#include "siamcheck/error.hpp"

namespace siamcheck {

void Tape::record(std::function<void()> backward_fn) {
    if (recording()) nodes_.push_back(std::move(backward_fn));
}

void Tape::clear() {
    nodes_.clear();
    nodes_.shrink_to_fit();
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw Error(ErrorKind::Contract, "backward needs a scalar loss, got shape " + shape_to_string(loss.shape()));
    auto& impl = *loss.impl();
    impl.ensure_grad();
    impl.grad[0] += 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::backward(const Tensor& output, std::span<const float> upstream) {
    if (upstream.size() != output.numel())
        throw Error(ErrorKind::Contract, "backward: upstream gradient has " + std::to_string(upstream.size()) +
                                             " values for output of shape " + shape_to_string(output.shape()));
    output.impl()->accumulate_grad(upstream);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

} // namespace siamcheck
