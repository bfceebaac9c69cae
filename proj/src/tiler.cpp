#include "slidebench/tiler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>

#include "slidebench/error.hpp"
#include "slidebench/png_io.hpp"
#include "slidebench/worker_pool.hpp"

namespace slidebench {

void TilePlan::validate() const {
    if (tile_size <= 0) fail(ErrorCode::InvalidArgument, "tile_size must be positive");
    if (stride <= 0) fail(ErrorCode::InvalidArgument, "stride must be positive");
    if (!(target_mpp > 0.0)) fail(ErrorCode::InvalidArgument, "target mpp must be positive");
    if (chunk_size <= 0) fail(ErrorCode::InvalidArgument, "chunk_size must be positive");
    if (!(min_coverage >= 0.0 && min_coverage <= 1.0)) fail(ErrorCode::InvalidArgument, "min_coverage must be in [0, 1]");
    if (!(min_variance >= 0.0)) fail(ErrorCode::InvalidArgument, "min_variance must be non-negative");
}

TileGeometry tile_geometry(std::span<const PyramidLevel> levels, const TilePlan& plan) {
    plan.validate();
    TileGeometry g;
    g.level = level_for_mpp(levels, plan.target_mpp);
    const double ratio = g.level.effective_mpp / levels.front().mpp;
    g.extent_l0 = std::max(1, static_cast<int>(std::lround(plan.tile_size * ratio)));
    g.stride_l0 = std::max(1, static_cast<int>(std::lround(plan.stride * ratio)));
    return g;
}

TileGeometry tile_geometry(const SlideSource& slide, const TilePlan& plan) { return tile_geometry(slide.levels(), plan); }

std::vector<TileOrigin> plan_tiles(std::span<const Region> regions, double mask_scale, int extent_l0, int stride_l0,
                                   int slide_width, int slide_height) {
    if (extent_l0 <= 0 || stride_l0 <= 0) fail(ErrorCode::InvalidArgument, "tile extent and stride must be positive");
    std::set<TileOrigin> origins;
    for (const auto& r : regions) {
        const int bx0 = std::clamp(static_cast<int>(std::floor(r.x0 * mask_scale)), 0, slide_width);
        const int by0 = std::clamp(static_cast<int>(std::floor(r.y0 * mask_scale)), 0, slide_height);
        const int bx1 = std::clamp(static_cast<int>(std::ceil(r.x1 * mask_scale)), 0, slide_width);
        const int by1 = std::clamp(static_cast<int>(std::ceil(r.y1 * mask_scale)), 0, slide_height);
        for (int y = by0; y + extent_l0 <= by1; y += stride_l0) {
            for (int x = bx0; x + extent_l0 <= bx1; x += stride_l0) origins.insert({x, y});
        }
    }
    return {origins.begin(), origins.end()};
}

double coverage(TileOrigin origin, int extent_l0, const TissueMask& mask) {
    const double s = mask.scale_to_level0;
    const int mx0 = std::clamp(static_cast<int>(std::floor(origin.x / s)), 0, mask.mask.width);
    const int my0 = std::clamp(static_cast<int>(std::floor(origin.y / s)), 0, mask.mask.height);
    const int mx1 = std::clamp(static_cast<int>(std::ceil((origin.x + extent_l0) / s)), 0, mask.mask.width);
    const int my1 = std::clamp(static_cast<int>(std::ceil((origin.y + extent_l0) / s)), 0, mask.mask.height);
    if (mx1 <= mx0 || my1 <= my0) return 0.0;
    std::int64_t ones = 0;
    for (int y = my0; y < my1; ++y) {
        for (int x = mx0; x < mx1; ++x) ones += mask.mask.at(x, y) != 0;
    }
    return static_cast<double>(ones) / (static_cast<double>(mx1 - mx0) * static_cast<double>(my1 - my0));
}

double pixel_variance(const Raster& tile) {
    if (tile.channels != 3 || tile.pixel_count() == 0) fail(ErrorCode::InvalidArgument, "variance needs a non-empty RGB tile");
    std::array<std::uint64_t, 256> hist{};
    for (std::size_t i = 0; i < tile.pixel_count(); ++i) {
        const unsigned r = tile.data[3 * i], g = tile.data[3 * i + 1], b = tile.data[3 * i + 2];
        ++hist[(299 * r + 587 * g + 114 * b + 500) / 1000];
    }
    // Exact integer moments; one rounding at the final division.
    unsigned __int128 n = 0, s1 = 0, s2 = 0;
    for (unsigned v = 0; v < 256; ++v) {
        n += hist[v];
        s1 += static_cast<unsigned __int128>(hist[v]) * v;
        s2 += static_cast<unsigned __int128>(hist[v]) * v * v;
    }
    const unsigned __int128 num = n * s2 - s1 * s1;
    return static_cast<double>(num) / (static_cast<double>(n) * static_cast<double>(n));
}

namespace {

struct LevelRect {
    int lx = 0, ly = 0, size = 0;
};

// Level-space footprint of a tile, or nullopt when it spills past the level edge.
std::optional<LevelRect> tile_level_rect(TileOrigin o, const SlideSource& slide, const TileGeometry& g, const TilePlan& plan) {
    const auto& lv = slide.levels()[static_cast<std::size_t>(g.level.level)];
    const int size = static_cast<int>(std::ceil(plan.tile_size / g.level.scale - 1e-9));
    LevelRect r{SlideSource::to_level(o.x, lv.downsample), SlideSource::to_level(o.y, lv.downsample), size};
    if (r.lx + size > lv.width || r.ly + size > lv.height) return std::nullopt;
    return r;
}

Raster finish_tile(const Raster& level_pixels, const TileGeometry& g, const TilePlan& plan) {
    if (g.level.scale >= 1.0 && level_pixels.width == plan.tile_size) return level_pixels;
    return resample_area_to(level_pixels, g.level.scale, plan.tile_size, plan.tile_size);
}

std::string tile_name(TileOrigin o) { return "tiles/" + std::to_string(o.x) + "_" + std::to_string(o.y) + ".png"; }

}  // namespace

std::string manifest_line(const TileRecord& r) {
    nlohmann::ordered_json j;
    j["x"] = r.x;
    j["y"] = r.y;
    j["w"] = r.w;
    j["h"] = r.h;
    j["coverage"] = r.coverage;
    j["variance"] = r.variance;
    j["path"] = r.path;
    return j.dump();
}

std::vector<TileRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot read manifest " + path.string());
    std::vector<TileRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(), j.at("h").get<int>(),
                           j.at("coverage").get<double>(), j.at("variance").get<double>(), j.at("path").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::MalformedConfig, path.string() + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

CropResult crop_slide(const SlideSource& slide, const TissueMask& mask, const TilePlan& plan,
                      const std::filesystem::path& out_root, const CropOptions& options) {
    namespace fs = std::filesystem;
    const TileGeometry g = tile_geometry(slide, plan);
    const auto candidates = plan_tiles(mask.regions, mask.scale_to_level0, g.extent_l0, g.stride_l0, slide.width(), slide.height());

    const fs::path slide_dir = out_root / slide.slide_id();
    std::error_code ec;
    fs::remove_all(slide_dir / "tiles", ec);
    fs::create_directories(slide_dir / "tiles", ec);
    if (ec) fail(ErrorCode::IoError, "cannot create " + (slide_dir / "tiles").string() + ": " + ec.message());

    // Group candidates by containing chunk; candidates are already (y, x) sorted.
    std::map<std::pair<int, int>, std::vector<TileOrigin>> chunk_map;
    for (const auto& o : candidates) chunk_map[{o.y / plan.chunk_size, o.x / plan.chunk_size}].push_back(o);
    std::vector<std::vector<TileOrigin>> chunks;
    chunks.reserve(chunk_map.size());
    for (auto& [key, list] : chunk_map) chunks.push_back(std::move(list));

    std::vector<std::vector<TileRecord>> results(chunks.size());
    parallel_for(chunks.size(), options.workers, [&](std::size_t ci) {
        struct Pending {
            TileOrigin origin;
            double coverage;
            LevelRect rect;
        };
        std::vector<Pending> pending;
        for (const auto& o : chunks[ci]) {
            const double cov = coverage(o, g.extent_l0, mask);
            if (cov < plan.min_coverage) continue;
            auto rect = tile_level_rect(o, slide, g, plan);
            if (!rect) continue;
            pending.push_back({o, cov, *rect});
        }
        if (pending.empty()) return;

        // One read per chunk, expanded to cover tiles that cross the chunk edge.
        int wx0 = std::numeric_limits<int>::max(), wy0 = wx0, wx1 = 0, wy1 = 0;
        for (const auto& p : pending) {
            wx0 = std::min(wx0, p.rect.lx);
            wy0 = std::min(wy0, p.rect.ly);
            wx1 = std::max(wx1, p.rect.lx + p.rect.size);
            wy1 = std::max(wy1, p.rect.ly + p.rect.size);
        }
        const Raster window = slide.read_level_region(g.level.level, wx0, wy0, wx1 - wx0, wy1 - wy0);
        for (const auto& p : pending) {
            const Raster tile = finish_tile(window.crop(p.rect.lx - wx0, p.rect.ly - wy0, p.rect.size, p.rect.size), g, plan);
            const double var = pixel_variance(tile);
            if (var < plan.min_variance) continue;
            TileRecord rec{p.origin.x, p.origin.y, plan.tile_size, plan.tile_size, p.coverage, var, tile_name(p.origin)};
            write_png(slide_dir / rec.path, tile);
            results[ci].push_back(std::move(rec));
        }
    });

    CropResult out;
    out.candidates = candidates.size();
    for (auto& r : results) {
        for (auto& rec : r) out.tiles.push_back(std::move(rec));
    }
    std::sort(out.tiles.begin(), out.tiles.end(),
              [](const TileRecord& a, const TileRecord& b) { return TileOrigin{a.x, a.y} < TileOrigin{b.x, b.y}; });

    out.manifest = slide_dir / "tile_manifest.jsonl";
    std::ofstream mf(out.manifest, std::ios::binary | std::ios::trunc);
    if (!mf) fail(ErrorCode::IoError, "cannot write " + out.manifest.string());
    for (const auto& rec : out.tiles) mf << manifest_line(rec) << '\n';
    if (!mf) fail(ErrorCode::IoError, "short write on " + out.manifest.string());
    if (out.tiles.empty()) warn("slide " + slide.slide_id() + " produced no tiles");

    // Resolved crop parameters; downstream stages read effective_mpp from here.
    nlohmann::ordered_json cfg;
    cfg["tool"] = "slidebench";
    cfg["version"] = SLIDEBENCH_VERSION;
    cfg["subcommand"] = "crop";
    cfg["slide_id"] = slide.slide_id();
    cfg["level0_mpp"] = slide.level0_mpp();
    cfg["target_mpp"] = plan.target_mpp;
    cfg["effective_mpp"] = g.level.effective_mpp;
    cfg["read_level"] = g.level.level;
    cfg["degraded"] = g.level.degraded;
    cfg["tile_size"] = plan.tile_size;
    cfg["stride"] = plan.stride;
    cfg["chunk_size"] = plan.chunk_size;
    cfg["min_coverage"] = plan.min_coverage;
    cfg["min_variance"] = plan.min_variance;
    cfg["thumbnail_mpp"] = options.mask.thumbnail_mpp;
    cfg["min_region_area"] = options.mask.min_region_area;
    cfg["otsu_threshold"] = mask.threshold;
    cfg["candidates"] = candidates.size();
    cfg["accepted"] = out.tiles.size();
    std::ofstream cf(slide_dir / "run_config.json", std::ios::binary | std::ios::trunc);
    cf << cfg.dump(2) << '\n';
    if (!cf) fail(ErrorCode::IoError, "cannot write " + (slide_dir / "run_config.json").string());
    return out;
}

CropResult crop_slide_file(const std::filesystem::path& slide_path, const TilePlan& plan,
                           const std::filesystem::path& out_root, const CropOptions& options) {
    const SlideSource slide = SlideSource::open(slide_path);
    Raster thumb;
    const TissueMask mask = compute_tissue_mask(slide, options.mask, &thumb);
    CropResult result = crop_slide(slide, mask, plan, out_root, options);
    if (options.emit_qc) write_qc_overlay(out_root / slide.slide_id() / "qc_mask.png", thumb, mask);
    return result;
}

std::vector<CandidateCheck> evaluate_candidates(const SlideSource& slide, const TissueMask& mask, const TilePlan& plan) {
    const TileGeometry g = tile_geometry(slide, plan);
    const auto candidates = plan_tiles(mask.regions, mask.scale_to_level0, g.extent_l0, g.stride_l0, slide.width(), slide.height());
    std::vector<CandidateCheck> out;
    out.reserve(candidates.size());
    for (const auto& o : candidates) {
        CandidateCheck c{o, coverage(o, g.extent_l0, mask), std::numeric_limits<double>::quiet_NaN(), false};
        if (c.coverage >= plan.min_coverage) {
            if (auto rect = tile_level_rect(o, slide, g, plan)) {
                const Raster tile =
                    finish_tile(slide.read_level_region(g.level.level, rect->lx, rect->ly, rect->size, rect->size), g, plan);
                c.variance = pixel_variance(tile);
                c.accepted = c.variance >= plan.min_variance;
            }
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace slidebench
