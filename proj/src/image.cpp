#include "slidemil/image.hpp"

#include <algorithm>
#include <cmath>

#include "slidemil/errors.hpp"

namespace slidemil {

namespace {

std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

ImageF to_float(const ImageU8& img) {
    ImageF out(3, img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                out.at(c, y, x) = img.at(y, x, c) / 255.0;
    return out;
}

ImageU8 to_u8(const ImageF& img) {
    ImageU8 out(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                out.at(y, x, c) = clamp_u8(img.at(std::min(c, img.channels - 1), y, x) * 255.0);
    return out;
}

std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return clamp_u8(0.299 * r + 0.587 * g + 0.114 * b);
}

ImageU8 crop(const ImageU8& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    if (y0 + h > img.height || x0 + w > img.width)
        throw ValidationError("crop window exceeds image bounds");
    ImageU8 out(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return out;
}

ImageF crop(const ImageF& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    if (y0 + h > img.height || x0 + w > img.width)
        throw ValidationError("crop window exceeds image bounds");
    ImageF out(img.channels, h, w);
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    return out;
}

ImageF resize_bilinear(const ImageF& img, std::size_t out_h, std::size_t out_w) {
    ImageF out(img.channels, out_h, out_w);
    if (out_h == 0 || out_w == 0) return out;
    const double sy = out_h > 1 ? double(img.height - 1) / double(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? double(img.width - 1) / double(out_w - 1) : 0.0;
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < out_h; ++y) {
            const double fy = y * sy;
            const std::size_t y0 = static_cast<std::size_t>(fy);
            const std::size_t y1 = std::min(y0 + 1, img.height - 1);
            const double wy = fy - y0;
            for (std::size_t x = 0; x < out_w; ++x) {
                const double fx = x * sx;
                const std::size_t x0 = static_cast<std::size_t>(fx);
                const std::size_t x1 = std::min(x0 + 1, img.width - 1);
                const double wx = fx - x0;
                const double top = (1 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1);
                const double bot = (1 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1);
                out.at(c, y, x) = (1 - wy) * top + wy * bot;
            }
        }
    return out;
}

ImageF hflip(const ImageF& img) {
    ImageF out(img.channels, img.height, img.width);
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x)
                out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    return out;
}

ImageF color_jitter(const ImageF& img, double brightness, double contrast, double saturation) {
    ImageF out = img;
    const std::size_t n = img.height * img.width;
    // brightness: multiply
    for (double& v : out.v) v *= brightness;
    // contrast: pull toward/away from the mean luminance
    double mean = 0.0;
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            mean += 0.299 * out.at(0, y, x) + 0.587 * out.at(1 % img.channels, y, x) +
                    0.114 * out.at(2 % img.channels, y, x);
    mean /= static_cast<double>(n);
    for (double& v : out.v) v = mean + (v - mean) * contrast;
    // saturation: blend each pixel with its gray value
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            const double gray = 0.299 * out.at(0, y, x) + 0.587 * out.at(1 % img.channels, y, x) +
                                0.114 * out.at(2 % img.channels, y, x);
            for (std::size_t c = 0; c < img.channels; ++c)
                out.at(c, y, x) = gray + (out.at(c, y, x) - gray) * saturation;
        }
    for (double& v : out.v) v = std::clamp(v, 0.0, 1.0);
    return out;
}

ImageF gaussian_blur(const ImageF& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double z = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        z += kernel[i + radius];
    }
    for (double& k : kernel) k /= z;

    const auto ih = static_cast<long>(img.height), iw = static_cast<long>(img.width);
    ImageF tmp(img.channels, img.height, img.width);
    for (std::size_t c = 0; c < img.channels; ++c)
        for (long y = 0; y < ih; ++y)
            for (long x = 0; x < iw; ++x) {
                double s = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const long xx = std::clamp(x + k, 0L, iw - 1);
                    s += kernel[k + radius] * img.at(c, y, xx);
                }
                tmp.at(c, y, x) = s;
            }
    ImageF out(img.channels, img.height, img.width);
    for (std::size_t c = 0; c < img.channels; ++c)
        for (long y = 0; y < ih; ++y)
            for (long x = 0; x < iw; ++x) {
                double s = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const long yy = std::clamp(y + k, 0L, ih - 1);
                    s += kernel[k + radius] * tmp.at(c, yy, x);
                }
                out.at(c, y, x) = s;
            }
    return out;
}

}  // namespace slidemil
