#include "slidebench/slide_io.hpp"

#include <tiffio.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>

#include "slidebench/error.hpp"
#include "slidebench/rng.hpp"

namespace slidebench {

namespace {

void silence_libtiff() {
    static std::once_flag once;
    std::call_once(once, [] {
        TIFFSetErrorHandler(nullptr);
        TIFFSetWarningHandler(nullptr);
    });
}

struct TiffCloser {
    void operator()(TIFF* tif) const {
        if (tif) TIFFClose(tif);
    }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

bool has_tiff_magic(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[4] = {};
    if (!in.read(magic, 4)) return false;
    const bool le = magic[0] == 'I' && magic[1] == 'I' && (magic[2] == 42 || magic[2] == 43) && magic[3] == 0;
    const bool be = magic[0] == 'M' && magic[1] == 'M' && magic[2] == 0 && (magic[3] == 42 || magic[3] == 43);
    return le || be;
}

std::optional<double> parse_number(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr == text.data()) return std::nullopt;
    return value;
}

// Explicit mpp side tag: "mpp=<v>" (ours) or Aperio-style "MPP = <v>".
std::optional<double> mpp_from_description(std::string_view desc) {
    for (std::string_view key : {"mpp=", "MPP = ", "MPP="}) {
        auto pos = desc.find(key);
        if (pos != std::string_view::npos) {
            auto v = parse_number(desc.substr(pos + key.size()));
            if (v && *v > 0.0) return v;
        }
    }
    return std::nullopt;
}

std::optional<double> mpp_from_resolution(TIFF* tif) {
    float xres = 0.0f;
    std::uint16_t unit = RESUNIT_NONE;
    if (!TIFFGetField(tif, TIFFTAG_XRESOLUTION, &xres) || !(xres > 0.0f)) return std::nullopt;
    if (!TIFFGetField(tif, TIFFTAG_RESOLUTIONUNIT, &unit)) unit = RESUNIT_INCH;  // TIFF default
    if (unit == RESUNIT_CENTIMETER) return 10000.0 / static_cast<double>(xres);
    if (unit == RESUNIT_INCH) return 25400.0 / static_cast<double>(xres);
    return std::nullopt;
}

std::optional<double> directory_mpp(TIFF* tif) {
    char* desc = nullptr;
    if (TIFFGetField(tif, TIFFTAG_IMAGEDESCRIPTION, &desc) && desc) {
        if (auto v = mpp_from_description(desc)) return v;
    }
    return mpp_from_resolution(tif);
}

struct DirInfo {
    std::uint16_t dir = 0;
    int width = 0;
    int height = 0;
    std::optional<double> mpp;
};

bool readable_layout(TIFF* tif) {
    std::uint16_t bps = 0, spp = 0, planar = PLANARCONFIG_CONTIG;
    TIFFGetFieldDefaulted(tif, TIFFTAG_BITSPERSAMPLE, &bps);
    TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &spp);
    TIFFGetFieldDefaulted(tif, TIFFTAG_PLANARCONFIG, &planar);
    return bps == 8 && (spp == 1 || spp == 3) && (planar == PLANARCONFIG_CONTIG || spp == 1);
}

}  // namespace

// Pooled decoder handles: libtiff handles are not thread-safe, so each read
// leases one exclusively and returns it afterwards.
struct SlideSource::HandlePool {
    std::filesystem::path path;
    std::mutex mutex;
    std::vector<TiffPtr> idle;

    TiffPtr acquire() {
        {
            std::lock_guard lock(mutex);
            if (!idle.empty()) {
                TiffPtr t = std::move(idle.back());
                idle.pop_back();
                return t;
            }
        }
        TiffPtr t(TIFFOpen(path.c_str(), "r"));
        if (!t) fail(ErrorCode::IoError, "cannot reopen " + path.string());
        return t;
    }

    void release(TiffPtr t) {
        std::lock_guard lock(mutex);
        idle.push_back(std::move(t));
    }
};

LevelChoice level_for_mpp(std::span<const PyramidLevel> levels, double target_mpp) {
    if (!(target_mpp > 0.0)) fail(ErrorCode::InvalidArgument, "target mpp must be positive");
    if (levels.empty()) fail(ErrorCode::InvalidArgument, "slide has no levels");
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i].mpp <= target_mpp * (1.0 + 1e-3)) best = i;
    }
    if (!best) return LevelChoice{0, 1.0, levels.front().mpp, true};
    const double scale = std::min(1.0, levels[*best].mpp / target_mpp);
    return LevelChoice{static_cast<int>(*best), scale, target_mpp, false};
}

SlideSource SlideSource::open(const std::filesystem::path& path) {
    silence_libtiff();
    if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, "no such file: " + path.string());
    if (!has_tiff_magic(path)) fail(ErrorCode::UnsupportedFormat, path.string() + " is not a TIFF file");
    TiffPtr tif(TIFFOpen(path.c_str(), "r"));
    if (!tif) fail(ErrorCode::UnsupportedFormat, "libtiff cannot open " + path.string());

    std::vector<DirInfo> dirs;
    std::uint16_t dir = 0;
    do {
        if (readable_layout(tif.get())) {
            std::uint32_t w = 0, h = 0;
            TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &w);
            TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &h);
            if (w > 0 && h > 0) dirs.push_back({dir, static_cast<int>(w), static_cast<int>(h), directory_mpp(tif.get())});
        }
        ++dir;
    } while (TIFFReadDirectory(tif.get()));

    if (dirs.empty()) fail(ErrorCode::UnsupportedFormat, path.string() + " has no 8-bit RGB or gray image");
    // Non-increasing widths; any page that breaks the chain ends the pyramid.
    std::vector<DirInfo> chain{dirs.front()};
    for (std::size_t i = 1; i < dirs.size(); ++i) {
        if (dirs[i].width < chain.back().width && dirs[i].height <= chain.back().height) chain.push_back(dirs[i]);
    }
    if (!chain.front().mpp) fail(ErrorCode::MissingResolutionMetadata, path.string() + " carries no mpp metadata");

    SlideSource s;
    s.path_ = path;
    s.slide_id_ = path.stem().string();
    const double mpp0 = *chain.front().mpp;
    const double w0 = chain.front().width;
    const double h0 = chain.front().height;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        const auto& d = chain[i];
        const double mpp = d.mpp ? *d.mpp : mpp0 * (w0 / d.width);
        const double ds = mpp / mpp0;
        const double ew = w0 / ds;
        const double eh = h0 / ds;
        if (std::abs(ew - d.width) > std::max(1.0, 0.01 * ew) || std::abs(eh - d.height) > std::max(1.0, 0.01 * eh)) {
            fail(ErrorCode::CorruptPyramid, "level " + std::to_string(i) + " dimensions disagree with its mpp");
        }
        if (i > 0 && !(mpp > s.levels_.back().mpp)) {
            fail(ErrorCode::CorruptPyramid, "level " + std::to_string(i) + " is not coarser than its predecessor");
        }
        s.levels_.push_back({static_cast<int>(i), d.width, d.height, mpp, ds});
        s.directories_.push_back(d.dir);
    }
    s.pool_ = std::make_shared<HandlePool>();
    s.pool_->path = path;
    s.pool_->release(std::move(tif));
    return s;
}

int SlideSource::to_level(int coord_l0, double downsample) {
    return static_cast<int>(std::floor(static_cast<double>(coord_l0) / downsample + 1e-9));
}

Raster SlideSource::read_region(int level, int x0, int y0, int w, int h) const {
    if (level < 0 || level >= static_cast<int>(levels_.size())) fail(ErrorCode::OutOfBounds, "no such level");
    if (x0 < 0 || y0 < 0) fail(ErrorCode::OutOfBounds, "negative origin");
    const auto& lv = levels_[static_cast<std::size_t>(level)];
    return read_level_region(level, to_level(x0, lv.downsample), to_level(y0, lv.downsample), w, h);
}

Raster SlideSource::read_level_region(int level, int lx, int ly, int w, int h) const {
    if (level < 0 || level >= static_cast<int>(levels_.size())) fail(ErrorCode::OutOfBounds, "no such level");
    const auto& lv = levels_[static_cast<std::size_t>(level)];
    if (lx < 0 || ly < 0 || w < 1 || h < 1) fail(ErrorCode::OutOfBounds, "negative origin or empty size");
    if (static_cast<long long>(lx) + w > lv.width || static_cast<long long>(ly) + h > lv.height) {
        fail(ErrorCode::OutOfBounds, "region exceeds level " + std::to_string(level) + " extent");
    }

    TiffPtr tif = pool_->acquire();
    struct Lease {
        HandlePool& pool;
        TiffPtr& tif;
        ~Lease() { pool.release(std::move(tif)); }
    } lease{*pool_, tif};

    if (!TIFFSetDirectory(tif.get(), directories_[static_cast<std::size_t>(level)])) {
        fail(ErrorCode::IoError, "cannot select directory for level " + std::to_string(level));
    }
    std::uint16_t spp = 3;
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &spp);
    Raster out(w, h, 3);

    auto copy_block = [&](const std::vector<std::uint8_t>& buf, int bx, int by, int bw, int bh) {
        const int sx = std::max(bx, lx), ex = std::min(bx + bw, lx + w);
        const int sy = std::max(by, ly), ey = std::min(by + bh, ly + h);
        for (int y = sy; y < ey; ++y) {
            for (int x = sx; x < ex; ++x) {
                const std::size_t src =
                    (static_cast<std::size_t>(y - by) * static_cast<std::size_t>(bw) + static_cast<std::size_t>(x - bx)) * spp;
                for (int c = 0; c < 3; ++c) out.at(x - lx, y - ly, c) = buf[src + (spp == 3 ? c : 0)];
            }
        }
    };

    if (TIFFIsTiled(tif.get())) {
        std::uint32_t tw = 0, th = 0;
        TIFFGetField(tif.get(), TIFFTAG_TILEWIDTH, &tw);
        TIFFGetField(tif.get(), TIFFTAG_TILELENGTH, &th);
        std::vector<std::uint8_t> buf(static_cast<std::size_t>(TIFFTileSize(tif.get())));
        const int tx0 = lx / static_cast<int>(tw), tx1 = (lx + w - 1) / static_cast<int>(tw);
        const int ty0 = ly / static_cast<int>(th), ty1 = (ly + h - 1) / static_cast<int>(th);
        for (int ty = ty0; ty <= ty1; ++ty) {
            for (int tx = tx0; tx <= tx1; ++tx) {
                const auto bx = static_cast<std::uint32_t>(tx) * tw, by = static_cast<std::uint32_t>(ty) * th;
                const ttile_t t = TIFFComputeTile(tif.get(), bx, by, 0, 0);
                if (TIFFReadEncodedTile(tif.get(), t, buf.data(), static_cast<tmsize_t>(buf.size())) < 0) {
                    fail(ErrorCode::IoError, "failed to decode tile " + std::to_string(t));
                }
                copy_block(buf, static_cast<int>(bx), static_cast<int>(by), static_cast<int>(tw), static_cast<int>(th));
            }
        }
    } else {
        std::uint32_t rps = 0;
        TIFFGetFieldDefaulted(tif.get(), TIFFTAG_ROWSPERSTRIP, &rps);
        rps = std::min<std::uint32_t>(rps, static_cast<std::uint32_t>(lv.height));
        std::vector<std::uint8_t> buf(static_cast<std::size_t>(TIFFStripSize(tif.get())));
        const int s0 = ly / static_cast<int>(rps), s1 = (ly + h - 1) / static_cast<int>(rps);
        for (int s = s0; s <= s1; ++s) {
            if (TIFFReadEncodedStrip(tif.get(), static_cast<tstrip_t>(s), buf.data(), static_cast<tmsize_t>(buf.size())) < 0) {
                fail(ErrorCode::IoError, "failed to decode strip " + std::to_string(s));
            }
            copy_block(buf, 0, s * static_cast<int>(rps), lv.width, static_cast<int>(rps));
        }
    }
    return out;
}

Thumbnail thumbnail(const SlideSource& slide, double target_mpp) {
    if (!(target_mpp >= slide.level0_mpp() * (1.0 - 1e-9))) {
        fail(ErrorCode::InvalidArgument, "thumbnail mpp must not be finer than level 0");
    }
    const LevelChoice choice = slide.level_for_mpp(target_mpp);
    const auto& lv = slide.levels()[static_cast<std::size_t>(choice.level)];
    Raster full = slide.read_region(choice.level, 0, 0, lv.width, lv.height);
    return {resample_area(full, choice.scale), choice.effective_mpp / slide.level0_mpp()};
}

// ---------------------------------------------------------------------------
// Synthetic slides

bool Blob::contains(int x, int y) const {
    const double px = x + 0.5, py = y + 0.5;
    if (shape == BlobShape::Rect) return px >= cx - rx && px < cx + rx && py >= cy - ry && py < cy + ry;
    const double dx = (px - cx) / rx, dy = (py - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
}

SynthSpec parse_synth_spec(std::string_view json_text) {
    SynthSpec spec;
    try {
        const auto j = nlohmann::json::parse(json_text);
        spec.width = j.at("width").get<int>();
        spec.height = j.at("height").get<int>();
        spec.mpp = j.at("mpp").get<double>();
        spec.seed = j.at("seed").get<std::uint64_t>();
        spec.levels = j.value("levels", 3);
        spec.tile_size = j.value("tile_size", 256);
        for (const auto& b : j.value("blobs", nlohmann::json::array())) {
            Blob blob{b.at("cx").get<double>(), b.at("cy").get<double>(), b.at("rx").get<double>(), b.at("ry").get<double>(),
                      BlobShape::Ellipse};
            const auto shape = b.value("shape", std::string("ellipse"));
            if (shape == "rect") blob.shape = BlobShape::Rect;
            else if (shape != "ellipse") fail(ErrorCode::InvalidSpec, "unknown blob shape '" + shape + "'");
            spec.blobs.push_back(blob);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidSpec, std::string("synthetic slide spec: ") + e.what());
    }
    return spec;
}

std::string synth_spec_to_json(const SynthSpec& spec) {
    nlohmann::json j;
    j["width"] = spec.width;
    j["height"] = spec.height;
    j["mpp"] = spec.mpp;
    j["seed"] = spec.seed;
    j["levels"] = spec.levels;
    j["tile_size"] = spec.tile_size;
    j["blobs"] = nlohmann::json::array();
    for (const auto& b : spec.blobs) {
        j["blobs"].push_back({{"cx", b.cx}, {"cy", b.cy}, {"rx", b.rx}, {"ry", b.ry},
                              {"shape", b.shape == BlobShape::Rect ? "rect" : "ellipse"}});
    }
    return j.dump(2);
}

namespace {

void validate_synth(const SynthSpec& spec) {
    if (spec.tile_size < 16 || spec.tile_size % 16 != 0) fail(ErrorCode::InvalidSpec, "tile_size must be a multiple of 16");
    if (spec.width < spec.tile_size || spec.height < spec.tile_size) fail(ErrorCode::InvalidSpec, "dims smaller than tile size");
    if (!(spec.mpp > 0.0)) fail(ErrorCode::InvalidSpec, "mpp must be positive");
    if (spec.levels < 1) fail(ErrorCode::InvalidSpec, "need at least one level");
    if ((spec.width >> (spec.levels - 1)) < 1 || (spec.height >> (spec.levels - 1)) < 1) {
        fail(ErrorCode::InvalidSpec, "too many levels for the slide size");
    }
    for (const auto& b : spec.blobs) {
        if (!(b.rx > 0.0 && b.ry > 0.0)) fail(ErrorCode::InvalidSpec, "blob radii must be positive");
        if (b.cx - b.rx < 0.0 || b.cy - b.ry < 0.0 || b.cx + b.rx > spec.width || b.cy + b.ry > spec.height) {
            fail(ErrorCode::InvalidSpec, "blob extends outside the slide");
        }
    }
}

// Integer in [-amp, amp] from a counter-stream element.
int noise_at(std::uint64_t seed, std::uint64_t index, int amp) {
    return static_cast<int>(CounterRng::at(seed, index) % static_cast<std::uint64_t>(2 * amp + 1)) - amp;
}

constexpr std::uint64_t kCoarseStream = 1ULL << 40;
constexpr int kBackground = 245;
constexpr int kBackgroundNoise = 3;
constexpr int kTissue[3] = {200, 120, 150};
constexpr int kTissueNoise = 16;
constexpr int kCoarseCell = 8;

}  // namespace

Raster render_synth_level0(const SynthSpec& spec) {
    validate_synth(spec);
    Raster img(spec.width, spec.height, 3);
    const auto cells_x = static_cast<std::uint64_t>((spec.width + kCoarseCell - 1) / kCoarseCell);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const auto idx = static_cast<std::uint64_t>(y) * static_cast<std::uint64_t>(spec.width) + static_cast<std::uint64_t>(x);
            bool tissue = false;
            for (const auto& b : spec.blobs) {
                if (b.contains(x, y)) {
                    tissue = true;
                    break;
                }
            }
            if (tissue) {
                const auto cell = static_cast<std::uint64_t>(y / kCoarseCell) * cells_x + static_cast<std::uint64_t>(x / kCoarseCell);
                const int n = noise_at(spec.seed, idx, kTissueNoise) + noise_at(spec.seed, kCoarseStream + cell, kTissueNoise);
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(kTissue[c] + n, 0, 255));
            } else {
                const int v = kBackground + noise_at(spec.seed, idx, kBackgroundNoise);
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(v);
            }
        }
    }
    return img;
}

void write_pyramid_tiff(const std::filesystem::path& path, std::span<const Raster> levels, std::span<const double> level_mpps,
                        int tile_size, bool tiled) {
    silence_libtiff();
    if (levels.empty()) fail(ErrorCode::InvalidArgument, "no levels to write");
    if (!level_mpps.empty() && level_mpps.size() != levels.size()) fail(ErrorCode::InvalidArgument, "one mpp per level");
    TiffPtr tif(TIFFOpen(path.c_str(), "w"));
    if (!tif) fail(ErrorCode::IoError, "cannot create " + path.string());
    const bool deflate = TIFFIsCODECConfigured(COMPRESSION_ADOBE_DEFLATE);

    for (std::size_t li = 0; li < levels.size(); ++li) {
        const Raster& r = levels[li];
        if (!r.valid() || r.channels != 3) fail(ErrorCode::InvalidArgument, "pyramid levels must be RGB");
        TIFF* t = tif.get();
        TIFFSetField(t, TIFFTAG_SUBFILETYPE, li == 0 ? 0 : FILETYPE_REDUCEDIMAGE);
        TIFFSetField(t, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(r.width));
        TIFFSetField(t, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(r.height));
        TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, 8);
        TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, 3);
        TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_RGB);
        TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
        TIFFSetField(t, TIFFTAG_COMPRESSION, deflate ? COMPRESSION_ADOBE_DEFLATE : COMPRESSION_NONE);
        if (!level_mpps.empty()) {
            const double mpp = level_mpps[li];
            const auto ppcm = static_cast<float>(10000.0 / mpp);
            TIFFSetField(t, TIFFTAG_XRESOLUTION, ppcm);
            TIFFSetField(t, TIFFTAG_YRESOLUTION, ppcm);
            TIFFSetField(t, TIFFTAG_RESOLUTIONUNIT, RESUNIT_CENTIMETER);
            char buf[64];
            auto res = std::to_chars(buf, buf + sizeof buf, mpp);
            const std::string desc = "slidebench pyramid|mpp=" + std::string(buf, res.ptr);
            TIFFSetField(t, TIFFTAG_IMAGEDESCRIPTION, desc.c_str());
        }
        if (tiled) {
            TIFFSetField(t, TIFFTAG_TILEWIDTH, static_cast<std::uint32_t>(tile_size));
            TIFFSetField(t, TIFFTAG_TILELENGTH, static_cast<std::uint32_t>(tile_size));
            std::vector<std::uint8_t> buf(static_cast<std::size_t>(tile_size) * static_cast<std::size_t>(tile_size) * 3);
            for (int ty = 0; ty < r.height; ty += tile_size) {
                for (int tx = 0; tx < r.width; tx += tile_size) {
                    std::fill(buf.begin(), buf.end(), static_cast<std::uint8_t>(kBackground));
                    const int ew = std::min(tile_size, r.width - tx), eh = std::min(tile_size, r.height - ty);
                    for (int y = 0; y < eh; ++y) {
                        std::memcpy(&buf[static_cast<std::size_t>(y) * static_cast<std::size_t>(tile_size) * 3],
                                    &r.data[r.index(tx, ty + y)], static_cast<std::size_t>(ew) * 3);
                    }
                    const ttile_t tile = TIFFComputeTile(t, static_cast<std::uint32_t>(tx), static_cast<std::uint32_t>(ty), 0, 0);
                    if (TIFFWriteEncodedTile(t, tile, buf.data(), static_cast<tmsize_t>(buf.size())) < 0) {
                        fail(ErrorCode::IoError, "tile write failed for " + path.string());
                    }
                }
            }
        } else {
            TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, 1);
            for (int y = 0; y < r.height; ++y) {
                if (TIFFWriteEncodedStrip(t, static_cast<tstrip_t>(y), const_cast<std::uint8_t*>(&r.data[r.index(0, y)]),
                                          static_cast<tmsize_t>(r.width) * 3) < 0) {
                    fail(ErrorCode::IoError, "strip write failed for " + path.string());
                }
            }
        }
        if (!TIFFWriteDirectory(t)) fail(ErrorCode::IoError, "directory write failed for " + path.string());
    }
}

void synth_slide(const SynthSpec& spec, const std::filesystem::path& path) {
    std::vector<Raster> levels{render_synth_level0(spec)};
    std::vector<double> mpps{spec.mpp};
    for (int l = 1; l < spec.levels; ++l) {
        const Raster& prev = levels.back();
        levels.push_back(resample_area_to(prev, 0.5, std::max(1, prev.width / 2), std::max(1, prev.height / 2)));
        mpps.push_back(mpps.back() * 2.0);
    }
    write_pyramid_tiff(path, levels, mpps, spec.tile_size, true);
}

}  // namespace slidebench
