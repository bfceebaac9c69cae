#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "slidebench/raster.hpp"

namespace slidebench {

using Histogram = std::array<std::uint64_t, 256>;

struct Region {
    int label = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  ///< half-open bbox in mask pixels
    std::int64_t area = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool operator==(const Region&) const = default;
};

struct OtsuResult {
    int threshold = 0;
    bool degenerate = false;  ///< all mass in one bin; `threshold` is that bin
};

struct TissueMask {
    Raster mask;  ///< one channel, values 0/1
    int threshold = 0;
    bool degenerate = false;
    double scale_to_level0 = 1.0;
    std::vector<Region> regions;
};

struct MaskOptions {
    double thumbnail_mpp = 8.0;
    std::int64_t min_region_area = 64;
};

/// HSV saturation scaled to 0..255: round(255 * (max - min) / max), 0 for black.
Raster saturation_channel(const Raster& rgb);

Histogram histogram(const Raster& gray);

/// Threshold maximizing between-class variance w0*w1*(mu0 - mu1)^2 where class
/// 0 holds bins <= t. Ties resolve to the smallest t; two candidates count as
/// tied when they agree to 1e-12 relative, so rounding noise cannot reorder
/// mathematically equal scores. Callers classify values strictly greater than
/// the threshold as foreground.
OtsuResult otsu_threshold(const Histogram& hist);

/// Otsu on saturation followed by one pass of 3x3 majority smoothing: a pixel
/// flips only when at least 5 of its (up to 8) neighbours disagree with it.
TissueMask binary_mask(const Raster& thumb_rgb);

/// 8-connected components of the 1-pixels. Components smaller than
/// `min_region_area` are dropped; the rest are labelled 1.. in raster order of
/// their first pixel.
std::vector<Region> label_components(const Raster& mask, std::int64_t min_region_area);

/// Per-pixel label image matching `label_components` (0 = background or dropped).
std::vector<int> label_image(const Raster& mask, std::int64_t min_region_area);

class SlideSource;

/// Thumbnail, mask, and regions for a whole slide. The thumbnail is returned
/// through `thumb_out` when given.
TissueMask compute_tissue_mask(const SlideSource& slide, const MaskOptions& options = {}, Raster* thumb_out = nullptr);

/// QC overlay: thumbnail with mask boundary pixels painted green.
void write_qc_overlay(const std::filesystem::path& path, const Raster& thumb_rgb, const TissueMask& mask);

}  // namespace slidebench
