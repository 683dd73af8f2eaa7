#include "slidemil/preprocess.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slidemil/errors.hpp"
#include "slidemil/rng.hpp"

namespace slidemil {

namespace {

// numpy-style linear-interpolation percentile, q in [0,100]
double percentile(std::vector<double> v, double q) {
    if (v.empty()) throw ValidationError("percentile of empty vector");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q / 100.0;
    const std::size_t lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (v[hi] - v[lo]) * (h - lo);
}

Eigen::Vector3d pixel_od(const ImageU8& img, std::size_t y, std::size_t x) {
    Eigen::Vector3d od;
    for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::max<double>(img.at(y, x, c), 1.0);
        od[c] = -std::log10(v / 255.0);
    }
    return od;
}

}  // namespace

int otsu_threshold(const std::array<std::uint64_t, 256>& histogram) {
    std::uint64_t total = 0;
    double weighted = 0.0;
    for (int i = 0; i < 256; ++i) {
        total += histogram[i];
        weighted += static_cast<double>(i) * static_cast<double>(histogram[i]);
    }
    if (total == 0) throw ValidationError("otsu_threshold: empty histogram");

    int best_t = 0;
    double best_var = -1.0;
    std::uint64_t n0 = 0;
    double sum0 = 0.0;
    for (int t = 0; t < 256; ++t) {
        n0 += histogram[t];
        sum0 += static_cast<double>(t) * static_cast<double>(histogram[t]);
        const std::uint64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;  // between-class variance is 0
        const double w0 = static_cast<double>(n0) / static_cast<double>(total);
        const double w1 = static_cast<double>(n1) / static_cast<double>(total);
        const double mu0 = sum0 / static_cast<double>(n0);
        const double mu1 = (weighted - sum0) / static_cast<double>(n1);
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {  // strict: ties keep the smallest t
            best_var = var;
            best_t = t;
        }
    }
    return best_var < 0.0 ? 0 : best_t;
}

std::array<std::uint64_t, 256> gray_histogram(const ImageU8& img) {
    std::array<std::uint64_t, 256> hist{};
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            ++hist[luminance(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2))];
    return hist;
}

TileSet filter_tiles(const SlideImage& slide, std::size_t patch_size,
                     double min_foreground_fraction) {
    if (patch_size == 0) throw ValidationError("patch_size must be >= 1");
    if (min_foreground_fraction < 0.0 || min_foreground_fraction > 1.0)
        throw ValidationError("min_foreground_fraction must be in [0,1]");

    TileSet out;
    out.slide_id = slide.slide_id;
    out.patch_size = patch_size;
    const ImageU8& img = slide.pixels;
    if (img.height < patch_size || img.width < patch_size) {
        out.too_small = true;
        return out;
    }
    out.grid_rows = img.height / patch_size;
    out.grid_cols = img.width / patch_size;

    // one global threshold per slide so tile decisions are consistent
    out.otsu_level = otsu_threshold(gray_histogram(img));

    for (std::size_t r = 0; r < out.grid_rows; ++r)
        for (std::size_t c = 0; c < out.grid_cols; ++c) {
            std::size_t fg = 0;
            for (std::size_t y = 0; y < patch_size; ++y)
                for (std::size_t x = 0; x < patch_size; ++x) {
                    const std::size_t yy = r * patch_size + y, xx = c * patch_size + x;
                    const int lum = luminance(img.at(yy, xx, 0), img.at(yy, xx, 1), img.at(yy, xx, 2));
                    if (lum <= out.otsu_level) ++fg;
                }
            const double frac = static_cast<double>(fg) / static_cast<double>(patch_size * patch_size);
            if (frac >= min_foreground_fraction) {
                out.tiles.push_back(crop(img, r * patch_size, c * patch_size, patch_size, patch_size));
                out.coords.emplace_back(r, c);
            }
        }
    return out;
}

std::optional<StainProfile> estimate_stain_profile(const ImageU8& tile,
                                                   const MacenkoParams& params) {
    std::vector<Eigen::Vector3d> kept;
    kept.reserve(tile.height * tile.width);
    for (std::size_t y = 0; y < tile.height; ++y)
        for (std::size_t x = 0; x < tile.width; ++x) {
            const Eigen::Vector3d od = pixel_od(tile, y, x);
            if (od.minCoeff() > params.beta) kept.push_back(od);
        }
    if (kept.size() < params.min_od_pixels) return std::nullopt;

    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& od : kept) mean += od;
    mean /= static_cast<double>(kept.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& od : kept) {
        const Eigen::Vector3d d = od - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(kept.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    if (es.info() != Eigen::Success) return std::nullopt;
    // principal plane of the OD cloud (two largest eigenvalues)
    Eigen::Vector3d e1 = es.eigenvectors().col(2);
    Eigen::Vector3d e2 = es.eigenvectors().col(1);
    if (es.eigenvalues()(1) <= 1e-12) return std::nullopt;  // cloud is a line: one stain
    if (e1.sum() < 0) e1 = -e1;  // keep the basis pointed into the positive OD cone
    if ((mean.dot(e2)) < 0) e2 = -e2;

    // angular extremes of the projected cloud
    std::vector<double> phi;
    phi.reserve(kept.size());
    for (const auto& od : kept) phi.push_back(std::atan2(od.dot(e2), od.dot(e1)));
    const double phi_min = percentile(phi, params.alpha);
    const double phi_max = percentile(phi, 100.0 - params.alpha);
    Eigen::Vector3d v1 = std::cos(phi_min) * e1 + std::sin(phi_min) * e2;
    Eigen::Vector3d v2 = std::cos(phi_max) * e1 + std::sin(phi_max) * e2;
    // hematoxylin carries the higher red-channel optical density
    if (v1(0) < v2(0)) std::swap(v1, v2);

    StainProfile profile;
    for (int i = 0; i < 3; ++i) {
        profile.stain_matrix[i][0] = v1(i);
        profile.stain_matrix[i][1] = v2(i);
    }

    // concentrations of every pixel against the estimated basis
    Eigen::Matrix<double, 3, 2> M;
    for (int i = 0; i < 3; ++i) {
        M(i, 0) = v1(i);
        M(i, 1) = v2(i);
    }
    const Eigen::Matrix2d mtm = M.transpose() * M;
    if (std::abs(mtm.determinant()) < 1e-9) return std::nullopt;  // colinear stains
    const Eigen::Matrix<double, 2, 3> pinv = mtm.inverse() * M.transpose();
    std::vector<double> c1, c2;
    c1.reserve(tile.height * tile.width);
    c2.reserve(tile.height * tile.width);
    for (std::size_t y = 0; y < tile.height; ++y)
        for (std::size_t x = 0; x < tile.width; ++x) {
            const Eigen::Vector2d c = pinv * pixel_od(tile, y, x);
            c1.push_back(c(0));
            c2.push_back(c(1));
        }
    profile.max_concentrations[0] = percentile(c1, 99.0);
    profile.max_concentrations[1] = percentile(c2, 99.0);
    if (profile.max_concentrations[0] <= 1e-6 || profile.max_concentrations[1] <= 1e-6)
        return std::nullopt;
    return profile;
}

NormalizeResult macenko_normalize(const ImageU8& tile, const StainProfile& reference,
                                  const MacenkoParams& params) {
    const auto src = estimate_stain_profile(tile, params);
    if (!src) return {tile, true};

    Eigen::Matrix<double, 3, 2> M, Mref;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) {
            M(i, j) = src->stain_matrix[i][j];
            Mref(i, j) = reference.stain_matrix[i][j];
        }
    const Eigen::Matrix<double, 2, 3> pinv = (M.transpose() * M).inverse() * M.transpose();
    const double s0 = reference.max_concentrations[0] / src->max_concentrations[0];
    const double s1 = reference.max_concentrations[1] / src->max_concentrations[1];

    NormalizeResult out;
    out.image = ImageU8(tile.height, tile.width);
    for (std::size_t y = 0; y < tile.height; ++y)
        for (std::size_t x = 0; x < tile.width; ++x) {
            Eigen::Vector2d c = pinv * pixel_od(tile, y, x);
            c(0) *= s0;
            c(1) *= s1;
            const Eigen::Vector3d od = Mref * c;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double v = 255.0 * std::pow(10.0, -od(ch));
                out.image.at(y, x, ch) =
                    static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    return out;
}

// --- synthetic slides -------------------------------------------------------

StainProfile synth_stain_truth() {
    StainProfile p;
    const double h[3] = {0.65, 0.70, 0.29};
    const double e[3] = {0.07, 0.99, 0.11};
    const double nh = std::sqrt(h[0] * h[0] + h[1] * h[1] + h[2] * h[2]);
    const double ne = std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
    for (int i = 0; i < 3; ++i) {
        p.stain_matrix[i][0] = h[i] / nh;
        p.stain_matrix[i][1] = e[i] / ne;
    }
    p.max_concentrations = {1.25, 1.25};
    return p;
}

namespace {

// smooth value noise: coarse control grid, bilinear interpolation
struct ValueNoise {
    std::size_t gh, gw, step;
    std::vector<double> ctrl;

    ValueNoise(std::size_t h, std::size_t w, std::size_t step_, Rng& rng) : step(step_) {
        gh = h / step + 2;
        gw = w / step + 2;
        ctrl.resize(gh * gw);
        for (double& c : ctrl) c = rng.uniform();
    }

    double at(std::size_t y, std::size_t x) const {
        const double fy = static_cast<double>(y) / step;
        const double fx = static_cast<double>(x) / step;
        const std::size_t y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
        const double wy = fy - y0, wx = fx - x0;
        const double a = ctrl[y0 * gw + x0], b = ctrl[y0 * gw + x0 + 1];
        const double c = ctrl[(y0 + 1) * gw + x0], d = ctrl[(y0 + 1) * gw + x0 + 1];
        return (1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * c + wx * d);
    }
};

}  // namespace

SynthSlide synth_slide(const SynthSpec& spec) {
    if (spec.grid_rows == 0 || spec.grid_cols == 0 || spec.cell_px == 0)
        throw ValidationError("synth_slide: grid and cell size must be >= 1");
    if (spec.positive != !spec.positive_cells.empty())
        throw ValidationError(
            "synth_slide: positive flag must match presence of planted cells (bag label = OR of "
            "instance labels)");
    for (const auto& [r, c] : spec.positive_cells)
        if (r >= spec.grid_rows || c >= spec.grid_cols)
            throw ValidationError("synth_slide: planted cell outside grid");

    const std::size_t cell = spec.cell_px;
    SynthSlide out;
    out.slide.slide_id = spec.slide_id;
    out.slide.label = spec.positive ? 1 : 0;
    out.slide.pixels = ImageU8(spec.grid_rows * cell, spec.grid_cols * cell);
    out.instance_labels.assign(spec.grid_rows * spec.grid_cols, 0);
    for (const auto& [r, c] : spec.positive_cells) out.instance_labels[r * spec.grid_cols + c] = 1;

    const StainProfile stains = synth_stain_truth();
    Rng rng(Rng::derive(spec.seed, 17));

    // concentration band shared by both texture families so their luminance
    // distributions overlap; only the spatial frequency separates them
    const double lo = 0.45, hi = 1.2;

    for (std::size_t gr = 0; gr < spec.grid_rows; ++gr)
        for (std::size_t gc = 0; gc < spec.grid_cols; ++gc) {
            const bool pos = out.instance_labels[gr * spec.grid_cols + gc] != 0;
            const double jit_h = rng.uniform(0.9, 1.1);
            const double jit_e = rng.uniform(0.9, 1.1);
            ValueNoise nh(cell, cell, 8, rng);
            ValueNoise ne(cell, cell, 8, rng);
            const std::size_t period = 2 + rng.uniform_index(2);  // checker pitch 2 or 3
            const std::size_t phase = rng.uniform_index(2);

            for (std::size_t y = 0; y < cell; ++y)
                for (std::size_t x = 0; x < cell; ++x) {
                    // darkness fields share one band across families so the
                    // foreground filter treats them alike; only the spatial
                    // frequency tells the families apart
                    double m1, m2;
                    if (!pos) {
                        // family A: low-frequency blobs
                        m1 = nh.at(y, x);
                        m2 = ne.at(y, x);
                    } else {
                        // family B: high-frequency checker
                        const std::size_t k = (y / period + x / period + phase) % 2;
                        m1 = 0.15 + 0.7 * k + 0.1 * (nh.at(y, x) - 0.5);
                        m2 = 0.15 + 0.7 * k + 0.1 * (ne.at(y, x) - 0.5);
                    }
                    const double ch = (lo + (hi - lo) * m1) * jit_h;
                    const double ce = (lo + (hi - lo) * m2) * jit_e;
                    for (std::size_t chan = 0; chan < 3; ++chan) {
                        const double od =
                            stains.stain_matrix[chan][0] * ch + stains.stain_matrix[chan][1] * ce;
                        const double v = 255.0 * std::pow(10.0, -od);
                        out.slide.pixels.at(gr * cell + y, gc * cell + x, chan) =
                            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
                    }
                }
        }
    return out;
}

}  // namespace slidemil
