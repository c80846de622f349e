#include "siamcheck/adam.hpp"

#include <cmath>
#include <string>

#include "siamcheck/error.hpp"

namespace siamcheck {

void adam_step(std::span<Tensor> params, AdamState& state) {
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!params[i].has_grad())
            throw Error(ErrorKind::Contract, "adam_step: parameter " + std::to_string(i) + " has no gradient");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.numel(), 0.0f);
            state.v.emplace_back(p.numel(), 0.0f);
        }
    }
    if (state.m.size() != params.size())
        throw Error(ErrorKind::Contract, "adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                                             " parameters, got " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i)
        if (state.m[i].size() != params[i].numel())
            throw Error(ErrorKind::Contract, "adam_step: moment size mismatch for parameter " + std::to_string(i));

    const auto& cfg = state.config;
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
    const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta2), t));

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto data = params[i].data();
        auto grad = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < data.size(); ++k) {
            const float g = grad[k];
            m[k] = cfg.beta1 * m[k] + (1.0f - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0f - cfg.beta2) * g * g;
            const float m_hat = m[k] / bc1;
            const float v_hat = v[k] / bc2;
            data[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
        if (!all_finite(data)) throw Error(ErrorKind::Numerical, "adam_step produced a non-finite parameter");
        params[i].zero_grad();
    }
}

} // namespace siamcheck
