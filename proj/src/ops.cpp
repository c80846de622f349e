#include "siamcheck/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gemm.hpp"
#include "siamcheck/error.hpp"

namespace siamcheck {

namespace {

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
    for (auto* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

Tensor make_output(Shape shape, bool requires_grad) {
    Tensor out(std::move(shape));
    out.impl()->requires_grad = requires_grad;
    return out;
}

void check_finite(const Tensor& t, const char* op) {
    if (!all_finite(t.data())) throw Error(ErrorKind::Numerical, std::string("non-finite value produced by ") + op);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank)
        throw Error(ErrorKind::Dimension, std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                                              ", got " + shape_to_string(t.shape()));
}

struct ConvGeometry {
    std::size_t n, h, w, c, kh, kw, f, stride;
    std::size_t oh, ow, pad_top, pad_left;
    std::size_t patch() const { return kh * kw * c; }
    std::size_t positions() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
                           Padding padding) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(kernel, 4, "conv2d", "kernel");
    require_rank(bias, 1, "conv2d", "bias");
    if (stride == 0) throw Error(ErrorKind::Config, "conv2d: stride must be >= 1");
    ConvGeometry g{};
    g.n = input.dim(0);
    g.h = input.dim(1);
    g.w = input.dim(2);
    g.c = input.dim(3);
    g.kh = kernel.dim(0);
    g.kw = kernel.dim(1);
    g.f = kernel.dim(3);
    g.stride = stride;
    if (kernel.dim(2) != g.c)
        throw Error(ErrorKind::Dimension, "conv2d: input channel axis (3) is " + std::to_string(g.c) +
                                              " but kernel input-channel axis (2) is " + std::to_string(kernel.dim(2)));
    if (bias.dim(0) != g.f)
        throw Error(ErrorKind::Dimension, "conv2d: bias axis (0) is " + std::to_string(bias.dim(0)) +
                                              " but kernel filter axis (3) is " + std::to_string(g.f));
    std::size_t pad_h = 0, pad_w = 0;
    if (padding == Padding::Same) {
        g.oh = (g.h + stride - 1) / stride;
        g.ow = (g.w + stride - 1) / stride;
        const auto need_h = (g.oh - 1) * stride + g.kh;
        const auto need_w = (g.ow - 1) * stride + g.kw;
        pad_h = need_h > g.h ? need_h - g.h : 0;
        pad_w = need_w > g.w ? need_w - g.w : 0;
    }
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
    if (g.kh > g.h + pad_h)
        throw Error(ErrorKind::Dimension, "conv2d: kernel height (axis 0) " + std::to_string(g.kh) +
                                              " exceeds padded input height (axis 1) " + std::to_string(g.h + pad_h));
    if (g.kw > g.w + pad_w)
        throw Error(ErrorKind::Dimension, "conv2d: kernel width (axis 1) " + std::to_string(g.kw) +
                                              " exceeds padded input width (axis 2) " + std::to_string(g.w + pad_w));
    if (padding == Padding::Valid) {
        g.oh = (g.h - g.kh) / stride + 1;
        g.ow = (g.w - g.kw) / stride + 1;
    }
    return g;
}

// cols[P, kh*kw*C] for one sample; out-of-frame taps are zero.
void im2col(const ConvGeometry& g, const float* x, float* cols) {
    const std::size_t patch = g.patch();
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
            float* dst = cols + (oy * g.ow + ox) * patch;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const auto ix =
                        static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
                    float* tap = dst + (ky * g.kw + kx) * g.c;
                    if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                        ix >= static_cast<std::ptrdiff_t>(g.w)) {
                        std::fill(tap, tap + g.c, 0.0f);
                    } else {
                        const float* src = x + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.c;
                        std::copy(src, src + g.c, tap);
                    }
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, const float* cols, float* dx) {
    const std::size_t patch = g.patch();
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const float* src = cols + (oy * g.ow + ox) * patch;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const auto ix =
                        static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                    const float* tap = src + (ky * g.kw + kx) * g.c;
                    float* dst = dx + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.c;
                    for (std::size_t c = 0; c < g.c; ++c) dst[c] += tap[c];
                }
            }
        }
    }
}

float stable_sigmoid(float x) {
    const double xd = x;
    double s;
    if (xd >= 0) {
        s = 1.0 / (1.0 + std::exp(-xd));
    } else {
        const double e = std::exp(xd);
        s = e / (1.0 + e);
    }
    // Keep outputs strictly inside (0,1) at float precision.
    constexpr float lo = std::numeric_limits<float>::min();
    constexpr float hi = 1.0f - 0x1.0p-24f;
    return std::clamp(static_cast<float>(s), lo, hi);
}

} // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              Padding padding) {
    const ConvGeometry g = conv_geometry(input, kernel, bias, stride, padding);
    const bool need_grad = tape.recording() && any_requires_grad({&input, &kernel, &bias});
    Tensor out = make_output({g.n, g.oh, g.ow, g.f}, need_grad);

    const std::size_t patch = g.patch();
    const std::size_t positions = g.positions();
    const std::size_t in_stride = g.h * g.w * g.c;
    const std::size_t out_stride = positions * g.f;
    std::vector<float> cols(positions * patch);
    const float* x = input.data().data();
    const float* k = kernel.data().data();
    const float* b = bias.data().data();
    float* y = out.data().data();
    for (std::size_t n = 0; n < g.n; ++n) {
        im2col(g, x + n * in_stride, cols.data());
        float* yn = y + n * out_stride;
        detail::gemm_nn(positions, g.f, patch, cols.data(), k, yn);
        for (std::size_t p = 0; p < positions; ++p)
            for (std::size_t f = 0; f < g.f; ++f) yn[p * g.f + f] += b[f];
    }
    check_finite(out, "conv2d");

    if (need_grad) {
        tape.record([g, in = input.impl(), ker = kernel.impl(), bi = bias.impl(), o = out.impl()] {
            if (o->grad.empty()) return;
            const std::size_t patch = g.patch();
            const std::size_t positions = g.positions();
            const std::size_t in_stride = g.h * g.w * g.c;
            const std::size_t out_stride = positions * g.f;
            const float* dy = o->grad.data();
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t n = 0; n < g.n; ++n)
                    for (std::size_t p = 0; p < positions; ++p)
                        for (std::size_t f = 0; f < g.f; ++f) bi->grad[f] += dy[n * out_stride + p * g.f + f];
            }
            std::vector<float> cols(positions * patch);
            if (ker->requires_grad) {
                ker->ensure_grad();
                for (std::size_t n = 0; n < g.n; ++n) {
                    im2col(g, in->data.data() + n * in_stride, cols.data());
                    detail::gemm_tn(patch, g.f, positions, cols.data(), dy + n * out_stride, ker->grad.data());
                }
            }
            if (in->requires_grad) {
                in->ensure_grad();
                for (std::size_t n = 0; n < g.n; ++n) {
                    std::fill(cols.begin(), cols.end(), 0.0f);
                    detail::gemm_nt(positions, patch, g.f, dy + n * out_stride, ker->data.data(), cols.data());
                    col2im_add(g, cols.data(), in->grad.data() + n * in_stride);
                }
            }
        });
    }
    return out;
}

Tensor maxpool2d(Tape& tape, const Tensor& input, std::size_t window, std::size_t stride) {
    require_rank(input, 4, "maxpool2d", "input");
    if (window == 0 || stride == 0) throw Error(ErrorKind::Config, "maxpool2d: window and stride must be >= 1");
    const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
    if (window > h || window > w)
        throw Error(ErrorKind::Dimension, "maxpool2d: window " + std::to_string(window) + " larger than input " +
                                              std::to_string(h) + "x" + std::to_string(w) + " (axes 1,2)");
    const std::size_t oh = (h - window) / stride + 1;
    const std::size_t ow = (w - window) / stride + 1;
    const bool need_grad = tape.recording() && input.requires_grad();
    Tensor out = make_output({n, oh, ow, c}, need_grad);
    std::vector<std::size_t> argmax(out.numel());
    const float* x = input.data().data();
    float* y = out.data().data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    std::size_t best = ((b * h + oy * stride) * w + ox * stride) * c + ch;
                    for (std::size_t ky = 0; ky < window; ++ky)
                        for (std::size_t kx = 0; kx < window; ++kx) {
                            const std::size_t idx = ((b * h + oy * stride + ky) * w + ox * stride + kx) * c + ch;
                            if (x[idx] > x[best]) best = idx;
                        }
                    const std::size_t o = ((b * oh + oy) * ow + ox) * c + ch;
                    y[o] = x[best];
                    argmax[o] = best;
                }
    if (need_grad) {
        tape.record([in = input.impl(), o = out.impl(), argmax = std::move(argmax)] {
            if (o->grad.empty()) return;
            in->ensure_grad();
            for (std::size_t i = 0; i < argmax.size(); ++i) in->grad[argmax[i]] += o->grad[i];
        });
    }
    return out;
}

Tensor dense(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require_rank(input, 2, "dense", "input");
    require_rank(weight, 2, "dense", "weight");
    require_rank(bias, 1, "dense", "bias");
    const std::size_t n = input.dim(0), d = input.dim(1), u = weight.dim(1);
    if (weight.dim(0) != d)
        throw Error(ErrorKind::Dimension, "dense: input axis 1 is " + std::to_string(d) + " but weight axis 0 is " +
                                              std::to_string(weight.dim(0)));
    if (bias.dim(0) != u)
        throw Error(ErrorKind::Dimension, "dense: bias axis 0 is " + std::to_string(bias.dim(0)) +
                                              " but weight axis 1 is " + std::to_string(u));
    const bool need_grad = tape.recording() && any_requires_grad({&input, &weight, &bias});
    Tensor out = make_output({n, u}, need_grad);
    float* y = out.data().data();
    detail::gemm_nn(n, u, d, input.data().data(), weight.data().data(), y);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < u; ++j) y[i * u + j] += bias[j];
    check_finite(out, "dense");
    if (need_grad) {
        tape.record([n, d, u, in = input.impl(), wt = weight.impl(), bi = bias.impl(), o = out.impl()] {
            if (o->grad.empty()) return;
            const float* dy = o->grad.data();
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < u; ++j) bi->grad[j] += dy[i * u + j];
            }
            if (wt->requires_grad) {
                wt->ensure_grad();
                detail::gemm_tn(d, u, n, in->data.data(), dy, wt->grad.data());
            }
            if (in->requires_grad) {
                in->ensure_grad();
                detail::gemm_nt(n, d, u, dy, wt->data.data(), in->grad.data());
            }
        });
    }
    return out;
}

Tensor flatten(Tape& tape, const Tensor& input) {
    if (input.rank() < 2) throw Error(ErrorKind::Dimension, "flatten: input needs a batch axis, got " +
                                                                shape_to_string(input.shape()));
    const std::size_t n = input.dim(0);
    const bool need_grad = tape.recording() && input.requires_grad();
    Tensor out(Shape{n, input.numel() / n}, std::vector<float>(input.data().begin(), input.data().end()));
    out.impl()->requires_grad = need_grad;
    if (need_grad) {
        tape.record([in = input.impl(), o = out.impl()] {
            if (!o->grad.empty()) in->accumulate_grad(o->grad);
        });
    }
    return out;
}

Tensor relu(Tape& tape, const Tensor& input) {
    const bool need_grad = tape.recording() && input.requires_grad();
    Tensor out = make_output(input.shape(), need_grad);
    auto x = input.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    if (need_grad) {
        tape.record([in = input.impl(), o = out.impl()] {
            if (o->grad.empty()) return;
            in->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                if (in->data[i] > 0.0f) in->grad[i] += o->grad[i];
        });
    }
    return out;
}

Tensor sigmoid(Tape& tape, const Tensor& input) {
    const bool need_grad = tape.recording() && input.requires_grad();
    Tensor out = make_output(input.shape(), need_grad);
    auto x = input.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = stable_sigmoid(x[i]);
    out.impl()->logits = input.impl();
    if (need_grad) {
        tape.record([in = input.impl(), o = out.impl()] {
            if (o->grad.empty()) return;
            in->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) {
                const float s = o->data[i];
                in->grad[i] += o->grad[i] * s * (1.0f - s);
            }
        });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& input) {
    const bool need_grad = tape.recording() && input.requires_grad();
    double acc = 0.0;
    for (float v : input.data()) acc += v;
    Tensor out = make_output({1}, need_grad);
    out.data()[0] = static_cast<float>(acc);
    check_finite(out, "sum");
    if (need_grad) {
        tape.record([in = input.impl(), o = out.impl()] {
            if (o->grad.empty()) return;
            in->ensure_grad();
            for (auto& g : in->grad) g += o->grad[0];
        });
    }
    return out;
}

BatchNormStats BatchNormStats::fresh(std::size_t channels) {
    return BatchNormStats{Tensor({channels}, 0.0f), Tensor({channels}, 1.0f), true};
}

BatchNormStats BatchNormStats::empty(std::size_t channels) {
    return BatchNormStats{Tensor({channels}, 0.0f), Tensor({channels}, 0.0f), false};
}

Tensor batchnorm(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta, Mode mode,
                 BatchNormStats& stats) {
    if (input.rank() < 2) throw Error(ErrorKind::Dimension, "batchnorm: input needs rank >= 2");
    const std::size_t c = input.shape().back();
    if (gamma.numel() != c || beta.numel() != c || stats.mean.numel() != c || stats.variance.numel() != c)
        throw Error(ErrorKind::Dimension, "batchnorm: channel axis is " + std::to_string(c) +
                                              " but gamma/beta/statistics have " + std::to_string(gamma.numel()) +
                                              "/" + std::to_string(beta.numel()) + "/" +
                                              std::to_string(stats.mean.numel()));
    const std::size_t m = input.numel() / c;
    const float* x = input.data().data();
    std::vector<float> mean(c), inv_std(c);

    if (mode == Mode::Train) {
        std::vector<double> s(c, 0.0), sq(c, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) s[ch] += x[i * c + ch];
        for (std::size_t ch = 0; ch < c; ++ch) s[ch] /= static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double dv = x[i * c + ch] - s[ch];
                sq[ch] += dv * dv;
            }
        auto rm = stats.mean.data();
        auto rv = stats.variance.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double var = sq[ch] / static_cast<double>(m);
            mean[ch] = static_cast<float>(s[ch]);
            inv_std[ch] = static_cast<float>(1.0 / std::sqrt(var + kBatchNormEpsilon));
            if (stats.populated) {
                rm[ch] = kBatchNormMomentum * rm[ch] + (1.0f - kBatchNormMomentum) * mean[ch];
                rv[ch] = kBatchNormMomentum * rv[ch] + (1.0f - kBatchNormMomentum) * static_cast<float>(var);
            } else {
                rm[ch] = mean[ch];
                rv[ch] = static_cast<float>(var);
            }
        }
        stats.populated = true;
    } else {
        if (!stats.populated)
            throw Error(ErrorKind::Uninitialized, "batchnorm: inference requested before any training step");
        for (std::size_t ch = 0; ch < c; ++ch) {
            mean[ch] = stats.mean[ch];
            inv_std[ch] = static_cast<float>(1.0 / std::sqrt(static_cast<double>(stats.variance[ch]) + kBatchNormEpsilon));
        }
    }

    const bool need_grad = tape.recording() && any_requires_grad({&input, &gamma, &beta});
    Tensor out = make_output(input.shape(), need_grad);
    std::vector<float> xhat(input.numel());
    float* y = out.data().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t k = i * c + ch;
            xhat[k] = (x[k] - mean[ch]) * inv_std[ch];
            y[k] = gamma[ch] * xhat[k] + beta[ch];
        }
    check_finite(out, "batchnorm");

    if (need_grad) {
        tape.record([m, c, train = mode == Mode::Train, xhat = std::move(xhat), inv_std = std::move(inv_std),
                     in = input.impl(), ga = gamma.impl(), be = beta.impl(), o = out.impl()] {
            if (o->grad.empty()) return;
            const float* dy = o->grad.data();
            std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    sum_dy[ch] += dy[i * c + ch];
                    sum_dy_xhat[ch] += static_cast<double>(dy[i * c + ch]) * xhat[i * c + ch];
                }
            if (ga->requires_grad) {
                ga->ensure_grad();
                for (std::size_t ch = 0; ch < c; ++ch) ga->grad[ch] += static_cast<float>(sum_dy_xhat[ch]);
            }
            if (be->requires_grad) {
                be->ensure_grad();
                for (std::size_t ch = 0; ch < c; ++ch) be->grad[ch] += static_cast<float>(sum_dy[ch]);
            }
            if (in->requires_grad) {
                in->ensure_grad();
                const double md = static_cast<double>(m);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t k = i * c + ch;
                        const double scale = static_cast<double>(ga->data[ch]) * inv_std[ch];
                        double g;
                        if (train)
                            g = scale / md * (md * dy[k] - sum_dy[ch] - xhat[k] * sum_dy_xhat[ch]);
                        else
                            g = scale * dy[k];
                        in->grad[k] += static_cast<float>(g);
                    }
            }
        });
    }
    return out;
}

Tensor dropout(Tape& tape, const Tensor& input, float rate, Mode mode, Rng& rng) {
    if (!(rate >= 0.0f && rate < 1.0f))
        throw Error(ErrorKind::Config, "dropout rate must be in [0,1), got " + std::to_string(rate));
    if (mode == Mode::Infer || rate == 0.0f) return input;
    const bool need_grad = tape.recording() && input.requires_grad();
    Tensor out = make_output(input.shape(), need_grad);
    const float scale = 1.0f / (1.0f - rate);
    std::vector<float> mask(input.numel());
    auto x = input.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        mask[i] = uniform01(rng) >= rate ? scale : 0.0f;
        y[i] = x[i] * mask[i];
    }
    if (need_grad) {
        tape.record([in = input.impl(), o = out.impl(), mask = std::move(mask)] {
            if (o->grad.empty()) return;
            in->ensure_grad();
            for (std::size_t i = 0; i < mask.size(); ++i) in->grad[i] += o->grad[i] * mask[i];
        });
    }
    return out;
}

L1Distance l1_distance(Tape& tape, const Tensor& p, const Tensor& q) {
    require_rank(p, 2, "l1_distance", "p");
    if (p.shape() != q.shape())
        throw Error(ErrorKind::Dimension, "l1_distance: shapes differ, " + shape_to_string(p.shape()) + " vs " +
                                              shape_to_string(q.shape()));
    const std::size_t n = p.dim(0), d = p.dim(1);
    const bool need_grad = tape.recording() && any_requires_grad({&p, &q});
    Tensor elem = make_output({n, d}, need_grad);
    Tensor dist = make_output({n, 1}, need_grad);
    for (std::size_t i = 0; i < n; ++i) {
        float acc = 0.0f;
        for (std::size_t j = 0; j < d; ++j) {
            const float v = std::fabs(p[i * d + j] - q[i * d + j]);
            elem.data()[i * d + j] = v;
            acc += v;
        }
        dist.data()[i] = acc;
    }
    check_finite(dist, "l1_distance");
    if (need_grad) {
        tape.record([n, d, pi = p.impl(), qi = q.impl(), e = elem.impl(), s = dist.impl()] {
            if (e->grad.empty() && s->grad.empty()) return;
            if (pi->requires_grad) pi->ensure_grad();
            if (qi->requires_grad) qi->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    const std::size_t k = i * d + j;
                    const float diff = pi->data[k] - qi->data[k];
                    const float sign = diff > 0.0f ? 1.0f : (diff < 0.0f ? -1.0f : 0.0f);
                    float g = 0.0f;
                    if (!e->grad.empty()) g += e->grad[k];
                    if (!s->grad.empty()) g += s->grad[i];
                    if (pi->requires_grad) pi->grad[k] += sign * g;
                    if (qi->requires_grad) qi->grad[k] -= sign * g;
                }
        });
    }
    return {elem, dist};
}

Tensor bce_loss(Tape& tape, const Tensor& prediction, const Tensor& target) {
    if (prediction.numel() != target.numel())
        throw Error(ErrorKind::Dimension, "bce_loss: prediction " + shape_to_string(prediction.shape()) +
                                              " vs target " + shape_to_string(target.shape()));
    for (float y : target.data())
        if (y != 0.0f && y != 1.0f) throw Error(ErrorKind::Label, "bce_loss: target " + std::to_string(y) + " not in {0,1}");
    const std::size_t n = prediction.numel();
    constexpr float lo = kProbabilityClamp;
    constexpr float hi = 1.0f - kProbabilityClamp;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(prediction[i], lo, hi);
        const double y = target[i];
        acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    const auto& logits = prediction.impl()->logits;
    const bool via_logits = logits && logits->requires_grad;
    const bool need_grad = tape.recording() && (via_logits || prediction.requires_grad());
    Tensor out = make_output({1}, need_grad);
    out.data()[0] = static_cast<float>(acc / static_cast<double>(n));
    check_finite(out, "bce_loss");
    if (need_grad) {
        tape.record([n, via_logits, pr = prediction.impl(), tg = target.impl(), o = out.impl()] {
            if (o->grad.empty()) return;
            const float scale = o->grad[0] / static_cast<float>(n);
            if (via_logits) {
                auto& z = *pr->logits;
                z.ensure_grad();
                for (std::size_t i = 0; i < n; ++i) z.grad[i] += scale * (pr->data[i] - tg->data[i]);
                return;
            }
            pr->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const float p = pr->data[i];
                if (p < lo || p > hi) continue;
                const float y = tg->data[i];
                pr->grad[i] += scale * (-y / p + (1.0f - y) / (1.0f - p));
            }
        });
    }
    return out;
}

Tensor concat_batch(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() < 1 || a.rank() != b.rank() ||
        !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1))
        throw Error(ErrorKind::Dimension, "concat_batch: shapes " + shape_to_string(a.shape()) + " and " +
                                              shape_to_string(b.shape()) + " differ beyond axis 0");
    Shape shape = a.shape();
    shape[0] += b.dim(0);
    const bool need_grad = tape.recording() && any_requires_grad({&a, &b});
    Tensor out = make_output(shape, need_grad);
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.numel()));
    if (need_grad) {
        tape.record([ai = a.impl(), bi = b.impl(), o = out.impl()] {
            if (o->grad.empty()) return;
            const std::span<const float> g(o->grad);
            if (ai->requires_grad) ai->accumulate_grad(g.subspan(0, ai->data.size()));
            if (bi->requires_grad) bi->accumulate_grad(g.subspan(ai->data.size(), bi->data.size()));
        });
    }
    return out;
}

Tensor slice_batch(Tape& tape, const Tensor& input, std::size_t begin, std::size_t end) {
    if (input.rank() < 1 || begin >= end || end > input.dim(0))
        throw Error(ErrorKind::Dimension, "slice_batch: rows [" + std::to_string(begin) + "," + std::to_string(end) +
                                              ") out of range for " + shape_to_string(input.shape()));
    Shape shape = input.shape();
    shape[0] = end - begin;
    const std::size_t row = input.numel() / input.dim(0);
    const bool need_grad = tape.recording() && input.requires_grad();
    Tensor out = make_output(shape, need_grad);
    std::copy_n(input.data().begin() + static_cast<std::ptrdiff_t>(begin * row), out.numel(), out.data().begin());
    if (need_grad) {
        tape.record([offset = begin * row, in = input.impl(), o = out.impl()] {
            if (o->grad.empty()) return;
            in->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) in->grad[offset + i] += o->grad[i];
        });
    }
    return out;
}

} // namespace siamcheck
