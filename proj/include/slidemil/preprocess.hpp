#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slidemil/image.hpp"

namespace slidemil {

struct SlideImage {
    ImageU8 pixels;
    std::string slide_id;
    std::optional<int> label;  // bag label, when known
};

// Non-overlapping patches cut from one slide, with grid coordinates.
struct TileSet {
    std::string slide_id;
    std::size_t patch_size = 0;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    int otsu_level = 0;  // threshold used for the foreground test
    std::vector<ImageU8> tiles;
    std::vector<std::pair<std::size_t, std::size_t>> coords;  // (row, col) grid indices
    bool too_small = false;  // slide smaller than patch_size in some direction
};

// Hematoxylin/eosin optical-density basis; columns are unit-norm stain
// vectors, max_concentrations are 99th-percentile stain concentrations.
struct StainProfile {
    std::array<std::array<double, 2>, 3> stain_matrix{};
    std::array<double, 2> max_concentrations{};
};

struct MacenkoParams {
    double beta = 0.15;        // optical-density floor for basis pixels
    double alpha = 1.0;        // angular percentile (alpha .. 100-alpha)
    std::size_t min_od_pixels = 30;
};

struct NormalizeResult {
    ImageU8 image;
    bool degenerate = false;  // no stable stain basis; image returned unchanged
};

// Between-class-variance-maximizing threshold over a 256-bin histogram.
// Classes split as (<= t, > t); ties resolved toward the smallest t.
int otsu_threshold(const std::array<std::uint64_t, 256>& histogram);

std::array<std::uint64_t, 256> gray_histogram(const ImageU8& img);

// Grid-tiles the slide, keeping tiles whose foreground fraction (luminance
// <= slide-global Otsu level) reaches min_foreground_fraction.
TileSet filter_tiles(const SlideImage& slide, std::size_t patch_size,
                     double min_foreground_fraction);

std::optional<StainProfile> estimate_stain_profile(const ImageU8& tile,
                                                   const MacenkoParams& params = {});

NormalizeResult macenko_normalize(const ImageU8& tile, const StainProfile& reference,
                                  const MacenkoParams& params = {});

// --- synthetic slides -------------------------------------------------------

struct SynthSpec {
    std::uint64_t seed = 0;
    std::size_t grid_rows = 8;
    std::size_t grid_cols = 8;
    std::size_t cell_px = 32;
    bool positive = false;
    std::vector<std::pair<std::size_t, std::size_t>> positive_cells;
    std::string slide_id;
};

struct SynthSlide {
    SlideImage slide;
    std::vector<std::uint8_t> instance_labels;  // row-major cells; evaluation only
};

// Deterministic per seed. Negative cells get smooth low-frequency blob
// texture, planted cells a high-frequency checker texture, both jittered
// through one synthetic two-stain color model.
SynthSlide synth_slide(const SynthSpec& spec);

// The stain basis synth_slide renders with; doubles as the ground truth for
// stain-estimation tests and as a default normalization reference.
StainProfile synth_stain_truth();

}  // namespace slidemil
