#pragma once

#include <cstdint>
#include <vector>

#include "slidemil/rng.hpp"

namespace slidemil {

// 8-bit RGB raster, row-major, interleaved channels.
struct ImageU8 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> px;  // height * width * 3

    ImageU8() = default;
    ImageU8(std::size_t h, std::size_t w, std::uint8_t fill = 0)
        : height(h), width(w), px(h * w * 3, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
        return px[(y * width + x) * 3 + c];
    }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
        return px[(y * width + x) * 3 + c];
    }
};

// Planar C x H x W float image in [0,1]; the model-facing representation.
struct ImageF {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> v;

    ImageF() = default;
    ImageF(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), v(c * h * w, 0.0) {}

    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return v[(c * height + y) * width + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return v[(c * height + y) * width + x];
    }
};

ImageF to_float(const ImageU8& img);
ImageU8 to_u8(const ImageF& img);

// Rec.601 luminance, rounded to nearest.
std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b);

ImageU8 crop(const ImageU8& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);
ImageF crop(const ImageF& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

ImageF resize_bilinear(const ImageF& img, std::size_t out_h, std::size_t out_w);
ImageF hflip(const ImageF& img);
// brightness/contrast/saturation jitter; factors of 1 are identity.
ImageF color_jitter(const ImageF& img, double brightness, double contrast, double saturation);
ImageF gaussian_blur(const ImageF& img, double sigma);

}  // namespace slidemil
