#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slidebench/raster.hpp"

namespace slidebench {

struct PyramidLevel {
    int index = 0;
    int width = 0;
    int height = 0;
    double mpp = 0.0;         ///< microns per pixel
    double downsample = 1.0;  ///< mpp / level0 mpp
};

struct LevelChoice {
    int level = 0;
    double scale = 1.0;  ///< level_mpp / target_mpp, always <= 1
    double effective_mpp = 0.0;
    bool degraded = false;  ///< target was finer than level 0; no upsampling performed
};

/// Coarsest level whose mpp is within 0.1% of not exceeding `target_mpp`.
LevelChoice level_for_mpp(std::span<const PyramidLevel> levels, double target_mpp);

/// An opened pyramidal TIFF. Immutable after construction; `read_region` may
/// be called concurrently (decoder handles are pooled per thread of use).
class SlideSource {
public:
    static SlideSource open(const std::filesystem::path& path);

    const std::filesystem::path& path() const { return path_; }
    const std::string& slide_id() const { return slide_id_; }
    const std::vector<PyramidLevel>& levels() const { return levels_; }
    double level0_mpp() const { return levels_.front().mpp; }
    int width() const { return levels_.front().width; }
    int height() const { return levels_.front().height; }

    LevelChoice level_for_mpp(double target_mpp) const { return slidebench::level_for_mpp(levels_, target_mpp); }

    /// Exact stored pixels of `level`. The origin is in level-0 pixels; the
    /// size is in pixels of the requested level. Output is always RGB.
    Raster read_region(int level, int x0, int y0, int w, int h) const;

    /// Same as read_region with the origin given in the level's own pixels.
    Raster read_level_region(int level, int lx, int ly, int w, int h) const;

    /// Level coordinate of a level-0 coordinate.
    static int to_level(int coord_l0, double downsample);

private:
    struct HandlePool;

    std::filesystem::path path_;
    std::string slide_id_;
    std::vector<PyramidLevel> levels_;
    std::vector<std::uint16_t> directories_;
    std::shared_ptr<HandlePool> pool_;
};

inline SlideSource open_slide(const std::filesystem::path& path) { return SlideSource::open(path); }

struct Thumbnail {
    Raster raster;
    double scale_to_level0 = 1.0;  ///< level-0 pixels per thumbnail pixel
};

/// Whole-slide raster at `target_mpp` (must not be finer than level 0).
Thumbnail thumbnail(const SlideSource& slide, double target_mpp);

enum class BlobShape { Ellipse, Rect };

/// Tissue-like region in level-0 pixels. A pixel belongs to the blob when its
/// centre (x + 0.5, y + 0.5) lies inside the ellipse or the axis-aligned
/// rectangle [cx - rx, cx + rx) x [cy - ry, cy + ry).
struct Blob {
    double cx = 0.0;
    double cy = 0.0;
    double rx = 0.0;
    double ry = 0.0;
    BlobShape shape = BlobShape::Ellipse;

    bool contains(int x, int y) const;
};

struct SynthSpec {
    int width = 0;
    int height = 0;
    double mpp = 0.5;
    std::uint64_t seed = 0;
    std::vector<Blob> blobs;
    int levels = 3;       ///< each level halves the previous one
    int tile_size = 256;  ///< TIFF tile edge
};

/// Parses {width, height, mpp, seed, blobs:[{cx, cy, rx, ry, shape?}], levels?, tile_size?}.
SynthSpec parse_synth_spec(std::string_view json_text);
std::string synth_spec_to_json(const SynthSpec& spec);

/// Level-0 pixels of the synthetic slide (also what `synth_slide` stores).
Raster render_synth_level0(const SynthSpec& spec);

/// Writes a deterministic tiled pyramidal TIFF; same spec => same bytes.
void synth_slide(const SynthSpec& spec, const std::filesystem::path& path);

/// Writes an arbitrary pyramid (levels[0] first). `level_mpps` holds one mpp
/// per level, stored both as pixels-per-centimetre resolution tags and as an
/// exact `mpp=<value>` side tag in ImageDescription; an empty span writes no
/// resolution metadata at all. Non-tiled output uses one strip per row.
void write_pyramid_tiff(const std::filesystem::path& path, std::span<const Raster> levels,
                        std::span<const double> level_mpps, int tile_size = 256, bool tiled = true);

}  // namespace slidebench
