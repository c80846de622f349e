#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "siamcheck/tensor.hpp"

namespace siamcheck {

/// Ordered record of differentiable operations.
///
/// Each op appends a closure holding the tensors and forward values it needs;
/// backward() replays them in reverse. An inactive tape records nothing, which
/// is how inference avoids holding saved activations.
class Tape {
public:
    enum class State { Recording, Inactive };

    explicit Tape(State state = State::Recording) : state_(state) {}

    bool recording() const { return state_ == State::Recording; }
    void set_state(State state) { state_ = state; }

    void record(std::function<void()> backward_fn);
    std::size_t size() const { return nodes_.size(); }
    void clear();

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
    /// Throws Contract if loss is not a single element.
    void backward(const Tensor& loss);
    /// Vector-Jacobian form: seeds output.grad with `upstream` (same length).
    void backward(const Tensor& output, std::span<const float> upstream);

private:
    State state_;
    std::vector<std::function<void()>> nodes_;
};

inline void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

} // namespace siamcheck
