#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "siamcheck/tensor.hpp"

namespace siamcheck {

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
};

struct AdamState {
    AdamConfig config;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
    std::uint64_t t = 0;
};

/// One bias-corrected Adam update over `params`, in order. The first call
/// sizes the moment buffers; later calls must pass the same parameter list.
/// Gradients are zeroed afterwards. Throws Contract for a parameter without a
/// gradient buffer.
void adam_step(std::span<Tensor> params, AdamState& state);

} // namespace siamcheck
