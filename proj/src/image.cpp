#include <algorithm>
#include <cmath>
#include <cstdint>

#include <png.h>

#include "siamcheck/data.hpp"
#include "siamcheck/error.hpp"

namespace siamcheck {

std::string_view to_string(ImageClass c) { return c == ImageClass::Correct ? "correct" : "incorrect"; }

ImageClass parse_image_class(std::string_view text) {
    if (text == "correct") return ImageClass::Correct;
    if (text == "incorrect") return ImageClass::Incorrect;
    throw Error(ErrorKind::Config, "unknown class '" + std::string(text) + "'");
}

Image decode_png(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw Error(ErrorKind::Decode, path.string() + ": " + png.message);
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
        const std::string message = png.message;
        png_image_free(&png);
        throw Error(ErrorKind::Decode, path.string() + ": " + message);
    }
    Image image(png.height, png.width);
    for (std::size_t i = 0; i < buffer.size(); ++i) image.pixels[i] = static_cast<float>(buffer[i]) / 255.0f;
    return image;
}

void encode_png(const std::filesystem::path& path, const Image& image) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(image.pixels.size());
    for (std::size_t i = 0; i < buffer.size(); ++i)
        buffer[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.pixels[i], 0.0f, 1.0f) * 255.0f));
    if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr))
        throw Error(ErrorKind::Io, path.string() + ": " + png.message);
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw Error(ErrorKind::Config, "resize target must be non-empty");
    if (height == image.height && width == image.width) return image;
    Image out(height, width);
    const double sy = static_cast<double>(image.height) / static_cast<double>(height);
    const double sx = static_cast<double>(image.width) / static_cast<double>(width);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx =
                std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double top = image.at(y0, x0, c) * (1 - wx) + image.at(y0, x1, c) * wx;
                const double bottom = image.at(y1, x0, c) * (1 - wx) + image.at(y1, x1, c) * wx;
                out.at(y, x, c) = static_cast<float>(top * (1 - wy) + bottom * wy);
            }
        }
    }
    return out;
}

Image decode_and_normalize(const std::filesystem::path& path, std::size_t resolution) {
    return resize_bilinear(decode_png(path), resolution, resolution);
}

Tensor stack_images(std::span<const Image* const> images) {
    if (images.empty()) throw Error(ErrorKind::Contract, "cannot stack an empty image list");
    const std::size_t h = images[0]->height, w = images[0]->width;
    Tensor out({images.size(), h, w, 3});
    auto dst = out.data().begin();
    for (const Image* img : images) {
        if (img->height != h || img->width != w)
            throw Error(ErrorKind::Dimension, "images in a batch differ in size (axes 1,2)");
        dst = std::copy(img->pixels.begin(), img->pixels.end(), dst);
    }
    return out;
}

} // namespace siamcheck
