#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "slidebench/raster.hpp"
#include "slidebench/slide_io.hpp"
#include "slidebench/tissue_mask.hpp"

namespace slidebench {

struct TilePlan {
    int tile_size = 224;  ///< pixels at target mpp
    int stride = 224;     ///< pixels at target mpp; may exceed tile_size
    double target_mpp = 0.5;
    int chunk_size = 4096;  ///< level-0 pixels
    double min_coverage = 0.25;
    double min_variance = 15.0;

    void validate() const;
};

struct TileOrigin {
    int x = 0;
    int y = 0;
    auto operator<=>(const TileOrigin& o) const {
        if (auto c = y <=> o.y; c != 0) return c;
        return x <=> o.x;
    }
    bool operator==(const TileOrigin&) const = default;
};

struct TileRecord {
    int x = 0, y = 0;  ///< level-0 top-left corner
    int w = 0, h = 0;  ///< pixels at target mpp
    double coverage = 0.0;
    double variance = 0.0;
    std::string path;  ///< relative to the slide folder
};

/// Geometry shared by planning and filtering.
struct TileGeometry {
    int extent_l0 = 0;  ///< tile edge in level-0 pixels
    int stride_l0 = 0;
    LevelChoice level;
};

TileGeometry tile_geometry(const SlideSource& slide, const TilePlan& plan);
TileGeometry tile_geometry(std::span<const PyramidLevel> levels, const TilePlan& plan);

/// Grid origins for every region bbox mapped to level 0 and clamped to the
/// slide. Tiles must fit inside the clamped bbox; the union is deduplicated
/// and sorted by (y, x).
std::vector<TileOrigin> plan_tiles(std::span<const Region> regions, double mask_scale, int extent_l0, int stride_l0,
                                   int slide_width, int slide_height);

/// Fraction of mask 1-pixels inside the tile footprint mapped to mask space
/// with [floor(x / s), ceil((x + extent) / s)) clamped to the mask.
double coverage(TileOrigin origin, int extent_l0, const TissueMask& mask);

/// Population variance of L = round(0.299 R + 0.587 G + 0.114 B).
double pixel_variance(const Raster& tile);

struct CropResult {
    std::vector<TileRecord> tiles;
    std::size_t candidates = 0;
    std::filesystem::path manifest;
};

struct CropOptions {
    int workers = 1;
    bool emit_qc = false;  ///< also write qc_mask.png (crop_slide_file only)
    MaskOptions mask;
};

/// Tiles one slide into `out_root/<slide_id>/`: PNG tiles under `tiles/` and
/// `tile_manifest.jsonl` sorted by (y, x). Output bytes do not depend on the
/// worker count or chunk size.
CropResult crop_slide(const SlideSource& slide, const TissueMask& mask, const TilePlan& plan,
                      const std::filesystem::path& out_root, const CropOptions& options = {});

/// Opens the slide, computes its tissue mask, and runs crop_slide.
CropResult crop_slide_file(const std::filesystem::path& slide_path, const TilePlan& plan,
                           const std::filesystem::path& out_root, const CropOptions& options = {});

/// Candidate-level filter outcome, exposed for verification tooling.
struct CandidateCheck {
    TileOrigin origin;
    double coverage = 0.0;
    double variance = 0.0;  ///< NaN when the coverage gate already rejected
    bool accepted = false;
};

/// Re-evaluates both filters on every candidate independently (one read per
/// tile, no chunking).
std::vector<CandidateCheck> evaluate_candidates(const SlideSource& slide, const TissueMask& mask, const TilePlan& plan);

std::string manifest_line(const TileRecord& record);
std::vector<TileRecord> read_manifest(const std::filesystem::path& path);

}  // namespace slidebench
