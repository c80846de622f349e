#include <algorithm>
#include <cmath>
#include <numbers>

#include "siamcheck/data.hpp"
#include "siamcheck/error.hpp"

namespace siamcheck {

AugmentationPolicy AugmentationPolicy::identity() {
    AugmentationPolicy p;
    p.rotation_deg = 0.0;
    p.translate_frac = 0.0;
    p.zoom_frac = 0.0;
    p.shear = 0.0;
    p.brightness_lo = 1.0;
    p.brightness_hi = 1.0;
    p.hflip = false;
    p.vflip = false;
    return p;
}

void AugmentationPolicy::validate() const {
    if (crop) throw Error(ErrorKind::Config, "crop augmentation is not supported");
    if (rotation_deg < 0 || translate_frac < 0 || zoom_frac < 0 || shear < 0)
        throw Error(ErrorKind::Config, "augmentation ranges must be non-negative");
    if (zoom_frac >= 1.0) throw Error(ErrorKind::Config, "zoom range must stay below 100%");
    if (brightness_lo < 0 || brightness_lo > brightness_hi)
        throw Error(ErrorKind::Config, "brightness range must satisfy 0 <= lo <= hi");
}

AugmentParams sample_augment_params(const AugmentationPolicy& policy, Rng& rng) {
    policy.validate();
    AugmentParams p;
    p.rotation_deg = uniform(rng, -policy.rotation_deg, policy.rotation_deg);
    p.translate_x = uniform(rng, -policy.translate_frac, policy.translate_frac);
    p.translate_y = uniform(rng, -policy.translate_frac, policy.translate_frac);
    p.zoom_x = uniform(rng, 1.0 - policy.zoom_frac, 1.0 + policy.zoom_frac);
    p.zoom_y = uniform(rng, 1.0 - policy.zoom_frac, 1.0 + policy.zoom_frac);
    p.shear = uniform(rng, -policy.shear, policy.shear);
    p.brightness = uniform(rng, policy.brightness_lo, policy.brightness_hi);
    const bool h = bernoulli(rng, 0.5);
    const bool v = bernoulli(rng, 0.5);
    p.hflip = policy.hflip && h;
    p.vflip = policy.vflip && v;
    return p;
}

AugmentParams sample_augment_params(const AugmentationPolicy& policy, std::uint64_t global_seed, std::uint64_t epoch,
                                    std::uint64_t index) {
    Rng rng = make_rng({global_seed, epoch, index, 0xA06});
    return sample_augment_params(policy, rng);
}

Image apply_augment(const Image& image, const AugmentParams& p, FillMode fill, float fill_value) {
    const std::size_t h = image.height, w = image.width;
    const double theta = p.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    // Forward map on centered coordinates: zoom * shear * rotation.
    const double a00 = p.zoom_x * (c + p.shear * s);
    const double a01 = p.zoom_x * (-s + p.shear * c);
    const double a10 = p.zoom_y * s;
    const double a11 = p.zoom_y * c;
    const double det = a00 * a11 - a01 * a10;
    const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0, cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double tx = p.translate_x * static_cast<double>(w), ty = p.translate_y * static_cast<double>(h);
    const double max_x = static_cast<double>(w) - 1.0, max_y = static_cast<double>(h) - 1.0;

    auto tap = [&](long y, long x, std::size_t ch) -> double {
        if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return fill_value;
        return image.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), ch);
    };

    Image out(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = static_cast<double>(x) - cx - tx, dy = static_cast<double>(y) - cy - ty;
            double sx = i00 * dx + i01 * dy + cx;
            double sy = i10 * dx + i11 * dy + cy;
            if (fill == FillMode::Nearest) {
                sx = std::clamp(sx, 0.0, max_x);
                sy = std::clamp(sy, 0.0, max_y);
            }
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double wx = sx - fx, wy = sy - fy;
            const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
            const std::size_t ox = p.hflip ? w - 1 - x : x;
            const std::size_t oy = p.vflip ? h - 1 - y : y;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                double v = tap(y0, x0, ch) * (1 - wx) * (1 - wy);
                if (wx > 0) v += tap(y0, x0 + 1, ch) * wx * (1 - wy);
                if (wy > 0) v += tap(y0 + 1, x0, ch) * (1 - wx) * wy;
                if (wx > 0 && wy > 0) v += tap(y0 + 1, x0 + 1, ch) * wx * wy;
                out.at(oy, ox, ch) = static_cast<float>(std::clamp(v * p.brightness, 0.0, 1.0));
            }
        }
    }
    return out;
}

LabeledImage augment(const LabeledImage& image, const AugmentationPolicy& policy, std::uint64_t global_seed,
                     std::uint64_t epoch, std::uint64_t index) {
    LabeledImage out = image;
    out.image = apply_augment(image.image, sample_augment_params(policy, global_seed, epoch, index), policy.fill,
                              policy.fill_value);
    return out;
}

} // namespace siamcheck
