#pragma once

// Independent reference implementations used only by tests. Nothing here
// calls into the code paths it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "siamcheck/ops.hpp"
#include "siamcheck/tensor.hpp"

namespace oracle {

using siamcheck::Shape;
using siamcheck::Tensor;

/// Quadruple-loop cross-correlation, channels-last, same summation order as a
/// textbook definition: taps in (ky, kx, c) order, bias added last.
inline std::vector<float> naive_conv2d(const std::vector<float>& x, std::size_t n, std::size_t h, std::size_t w,
                                       std::size_t c, const std::vector<float>& k, std::size_t kh, std::size_t kw,
                                       std::size_t f, const std::vector<float>& b, std::size_t stride, bool same,
                                       std::size_t& oh, std::size_t& ow) {
    std::size_t pt = 0, pl = 0;
    if (same) {
        oh = (h + stride - 1) / stride;
        ow = (w + stride - 1) / stride;
        const long ph = std::max<long>(0, static_cast<long>((oh - 1) * stride + kh) - static_cast<long>(h));
        const long pw = std::max<long>(0, static_cast<long>((ow - 1) * stride + kw) - static_cast<long>(w));
        pt = static_cast<std::size_t>(ph / 2);
        pl = static_cast<std::size_t>(pw / 2);
    } else {
        oh = (h - kh) / stride + 1;
        ow = (w - kw) / stride + 1;
    }
    std::vector<float> y(n * oh * ow * f);
    for (std::size_t b0 = 0; b0 < n; ++b0)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
                for (std::size_t fo = 0; fo < f; ++fo) {
                    float acc = 0.0f;
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx)
                            for (std::size_t ci = 0; ci < c; ++ci) {
                                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pt);
                                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pl);
                                float v = 0.0f;
                                if (iy >= 0 && ix >= 0 && iy < static_cast<long>(h) && ix < static_cast<long>(w))
                                    v = x[((b0 * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c + ci];
                                acc += v * k[((ky * kw + kx) * c + ci) * f + fo];
                            }
                    y[((b0 * oh + oy) * ow + ox) * f + fo] = acc + b[fo];
                }
    return y;
}

inline Tensor random_tensor(Shape shape, std::mt19937& gen, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    std::vector<float> v(siamcheck::shape_numel(shape));
    for (auto& x : v) x = dist(gen);
    return Tensor(std::move(shape), std::move(v));
}

/// Norm-wise relative error between two gradient vectors.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-6});
    return std::sqrt(diff) / denom;
}

/// Central finite differences of a scalar function of the tensors in `wrt`.
/// `loss` must evaluate from the current tensor contents (it is called with
/// perturbed values) and return a double.
inline std::vector<std::vector<double>> finite_differences(std::vector<Tensor> wrt,
                                                           const std::function<double()>& loss, double step) {
    std::vector<std::vector<double>> out;
    for (auto& t : wrt) {
        std::vector<double> g(t.numel());
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const float orig = t.data()[i];
            t.data()[i] = static_cast<float>(orig + step);
            const double up = loss();
            t.data()[i] = static_cast<float>(orig - step);
            const double down = loss();
            t.data()[i] = orig;
            g[i] = (up - down) / (2.0 * step);
        }
        out.push_back(std::move(g));
    }
    return out;
}

/// Fixed random projection of an op output to a scalar, in double.
inline double project(const Tensor& out, const std::vector<float>& weights) {
    double acc = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) acc += static_cast<double>(out[i]) * weights[i];
    return acc;
}

struct Confusion {
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Straight counting over (actual_positive, predicted_positive) labels.
inline Confusion count(const std::vector<bool>& actual_positive, const std::vector<bool>& predicted_positive) {
    Confusion c;
    for (std::size_t i = 0; i < actual_positive.size(); ++i) {
        if (predicted_positive[i] && actual_positive[i]) ++c.tp;
        else if (predicted_positive[i] && !actual_positive[i]) ++c.fp;
        else if (!predicted_positive[i] && !actual_positive[i]) ++c.tn;
        else ++c.fn;
    }
    return c;
}

/// Majority of `same` decisions; exact ties count as not-same.
inline bool majority_same(const std::vector<bool>& decisions) {
    long yes = 0, no = 0;
    for (bool d : decisions) (d ? yes : no)++;
    return yes > no;
}

} // namespace oracle
