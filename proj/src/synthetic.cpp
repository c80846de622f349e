#include <algorithm>
#include <cstdio>

#include "siamcheck/data.hpp"
#include "siamcheck/error.hpp"

namespace siamcheck {

namespace {

constexpr std::size_t kMaxSubclasses = 7;

struct Rect {
    double cx, cy, half_w, half_h;
};

void fill_rect(Image& img, const Rect& r, const float rgb[3]) {
    const double n = static_cast<double>(img.width);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            const double u = (static_cast<double>(x) + 0.5) / n, v = (static_cast<double>(y) + 0.5) / n;
            if (std::abs(u - r.cx) <= r.half_w && std::abs(v - r.cy) <= r.half_h)
                for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
        }
}

Image background(std::size_t res, double noise, Rng& rng) {
    Image img(res, res);
    for (auto& v : img.pixels) v = static_cast<float>(std::clamp(0.4 + uniform(rng, -noise, noise), 0.0, 1.0));
    return img;
}

// Draws one sample. Geometry is in [0,1] image units with small jitter.
Image draw(ImageClass label, std::size_t subclass, std::size_t subclasses, std::size_t res, double noise, Rng& rng) {
    Image img = background(res, noise, rng);
    const double jx = uniform(rng, -0.04, 0.04), jy = uniform(rng, -0.04, 0.04);
    const double size = uniform(rng, 0.13, 0.18);
    const float level = static_cast<float>(uniform(rng, 0.85, 1.0));
    const float bright[3] = {level, level, level};
    if (label == ImageClass::Correct) {
        fill_rect(img, {0.5 + jx, 0.5 + jy, size, size}, bright);
        return img;
    }
    const float dark_level = static_cast<float>(uniform(rng, 0.0, 0.12));
    const float dark[3] = {dark_level, dark_level, dark_level};
    if (subclasses == 1) {
        fill_rect(img, {0.5 + jx, 0.5 + jy, size, size}, dark);
        return img;
    }
    switch (subclass) {
    case 0: fill_rect(img, {0.22 + jx, 0.22 + jy, size * 0.8, size * 0.8}, bright); break;
    case 1: fill_rect(img, {0.5 + jx, 0.5 + jy, size * 1.8, size * 0.45}, bright); break;
    case 2: fill_rect(img, {0.5 + jx, 0.5 + jy, size, size}, dark); break;
    case 3: {
        const float red[3] = {level, 0.15f, 0.1f};
        fill_rect(img, {0.5 + jx, 0.5 + jy, size, size}, red);
        break;
    }
    case 4:
        fill_rect(img, {0.3 + jx, 0.5 + jy, size * 0.5, size * 0.5}, bright);
        fill_rect(img, {0.7 + jx, 0.5 + jy, size * 0.5, size * 0.5}, bright);
        break;
    case 5: fill_rect(img, {0.5 + jx, 0.5 + jy, size * 0.45, size * 1.8}, bright); break;
    default: {
        const float blue[3] = {0.1f, 0.2f, level};
        fill_rect(img, {0.5 + jx, 0.5 + jy, size, size}, blue);
        break;
    }
    }
    return img;
}

} // namespace

Dataset make_synthetic_dataset(const SyntheticSpec& spec) {
    if (spec.incorrect_subclasses == 0 || spec.incorrect_subclasses > kMaxSubclasses)
        throw Error(ErrorKind::Config, "synthetic data supports 1 to 7 incorrect sub-cases");
    if (spec.resolution < 8) throw Error(ErrorKind::Config, "synthetic resolution too small");
    Dataset out;
    const std::string splits[2] = {"train", "validation"};
    const std::size_t counts[2] = {spec.train_per_class, spec.validation_per_class};
    for (std::size_t s = 0; s < 2; ++s) {
        auto& dst = s == 0 ? out.train : out.validation;
        for (auto label : {ImageClass::Correct, ImageClass::Incorrect}) {
            for (std::size_t i = 0; i < counts[s]; ++i) {
                Rng rng = make_rng({spec.seed, s, static_cast<std::uint64_t>(label), i, 0x5F47});
                const std::size_t sub = label == ImageClass::Incorrect ? i % spec.incorrect_subclasses : 0;
                LabeledImage img;
                img.image = draw(label, sub, spec.incorrect_subclasses, spec.resolution, spec.noise, rng);
                img.label = label;
                if (label == ImageClass::Incorrect && spec.incorrect_subclasses > 1)
                    img.subclass = "case" + std::to_string(sub + 1);
                img.split = splits[s];
                char name[64];
                std::snprintf(name, sizeof name, "%s-%s-%04zu", splits[s].c_str(),
                              std::string(to_string(label)).c_str(), i);
                img.id = name;
                dst.push_back(std::move(img));
            }
        }
    }
    return out;
}

} // namespace siamcheck
