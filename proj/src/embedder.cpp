#include "slidebench/embedder.hpp"

#include <cmath>
#include <cstdlib>
#include <nlohmann/json.hpp>

#include "slidebench/error.hpp"
#include "slidebench/png_io.hpp"
#include "slidebench/rng.hpp"
#include "slidebench/tiler.hpp"
#include "slidebench/worker_pool.hpp"

namespace slidebench {

std::string EmbedderSpec::resolved_id() const {
    if (!embedder_id.empty()) return embedder_id;
    return "native8x8-s" + std::to_string(seed) + "-d" + std::to_string(dim);
}

Projection::Projection(int dim, std::uint64_t seed) : dim_(dim) {
    if (dim < 1) fail(ErrorCode::InvalidArgument, "embedding dimension must be positive");
    weights_.resize(static_cast<std::size_t>(dim) * kNativeInputs);
    for (std::size_t i = 0; i < weights_.size(); ++i) weights_[i] = 2.0 * CounterRng::unit_at(seed, i) - 1.0;
}

std::vector<float> native_embed(const Raster& tile, const Projection& projection) {
    if (tile.channels != 3 || tile.width != tile.height || tile.width < 8) {
        fail(ErrorCode::InvalidArgument, "native embedder needs a square RGB tile of at least 8 px");
    }
    const Raster small = resample_area_to(tile, 8.0 / tile.width, 8, 8);
    double x[kNativeInputs];
    for (int k = 0; k < kNativeInputs; ++k) x[k] = small.data[static_cast<std::size_t>(k)] / 255.0;

    std::vector<double> v(static_cast<std::size_t>(projection.dim()));
    double sq = 0.0;
    for (int j = 0; j < projection.dim(); ++j) {
        double acc = 0.0;
        for (int k = 0; k < kNativeInputs; ++k) acc += projection.at(j, k) * x[k];
        v[static_cast<std::size_t>(j)] = acc;
        sq += acc * acc;
    }
    std::vector<float> out(v.size(), 0.0f);
    if (sq > 0.0) {
        const double norm = std::sqrt(sq);
        for (std::size_t j = 0; j < v.size(); ++j) out[j] = static_cast<float>(v[j] / norm);
    }
    return out;
}

std::vector<float> native_embed(const Raster& tile, const EmbedderSpec& spec) {
    return native_embed(tile, Projection(spec.dim, spec.seed));
}

double recorded_slide_mpp(const std::filesystem::path& slide_dir) {
    const auto path = slide_dir / "run_config.json";
    try {
        const auto j = nlohmann::json::parse(read_text_file(path));
        return j.at("effective_mpp").get<double>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::MalformedConfig, path.string() + ": " + e.what());
    }
}

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

struct SlideJob {
    const SlideEntry* slide;
    std::vector<TileRecord> records;
    std::vector<float> features;
};

}  // namespace

EmbedSummary embed_dataset(const std::filesystem::path& root, const EmbedderSpec& spec, const EmbedOptions& options) {
    namespace fs = std::filesystem;
    if (options.batch < 1) fail(ErrorCode::InvalidArgument, "batch must be positive");
    const auto slides = scan_slides(root);
    EmbedSummary summary;

    std::vector<SlideJob> jobs;
    for (const auto& s : slides) {
        if (!s.has_manifest) continue;
        if (s.has_features && !options.force) {
            summary.skipped_existing.push_back(s.slide_id);
            continue;
        }
        auto records = read_manifest(s.manifest_path());
        if (records.empty()) {
            warn("slide " + s.slide_id + " has no tiles; no feature file written");
            summary.empty.push_back(s.slide_id);
            continue;
        }
        for (const auto& r : records) {
            if (!fs::is_regular_file(s.dir / r.path)) fail(ErrorCode::MissingTiles, "slide " + s.slide_id + " lacks " + r.path);
        }
        jobs.push_back({&s, std::move(records), {}});
    }

    if (spec.kind == EmbedderKind::External) {
        if (options.adapter_cmd.empty()) fail(ErrorCode::InvalidArgument, "external embedder requires an adapter command");
        for (auto& job : jobs) {
            const auto& s = *job.slide;
            const fs::path out = s.features_path();
            std::error_code ec;
            fs::remove(out, ec);
            const std::string cmd = options.adapter_cmd + " --tiles-dir " + shell_quote((s.dir / "tiles").string()) +
                                    " --manifest " + shell_quote(s.manifest_path().string()) + " --out " +
                                    shell_quote(out.string()) + " --dim " + std::to_string(spec.dim) + " --embedder-id " +
                                    shell_quote(spec.resolved_id());
            const int status = std::system(cmd.c_str());
            SlideEntry probe = s;
            probe.has_features = fs::is_regular_file(out);
            const auto check = validate_slide_features(probe);
            if (status != 0 || !check.ok) {
                std::string why = status != 0 ? "adapter exited with status " + std::to_string(status) : "";
                for (const auto& r : check.reasons) why += (why.empty() ? "" : "; ") + r;
                warn("slide " + s.slide_id + ": external features rejected (" + why + ")");
                fs::remove(out, ec);
                summary.rejected.push_back(s.slide_id);
            } else {
                summary.written.push_back(s.slide_id);
            }
        }
        return summary;
    }

    const Projection projection(spec.dim, spec.seed);
    const auto dim = static_cast<std::size_t>(spec.dim);
    // Flatten (slide, batch) pairs so one pool serves every slide; each batch
    // writes its own rows, so the result is independent of scheduling.
    struct Batch {
        std::size_t job, begin, end;
    };
    std::vector<Batch> batches;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        jobs[j].features.assign(jobs[j].records.size() * dim, 0.0f);
        for (std::size_t b = 0; b < jobs[j].records.size(); b += static_cast<std::size_t>(options.batch)) {
            batches.push_back({j, b, std::min(jobs[j].records.size(), b + static_cast<std::size_t>(options.batch))});
        }
    }
    parallel_for(batches.size(), options.workers, [&](std::size_t bi) {
        const auto& b = batches[bi];
        auto& job = jobs[b.job];
        for (std::size_t i = b.begin; i < b.end; ++i) {
            const Raster tile = read_png(job.slide->dir / job.records[i].path);
            const auto v = native_embed(tile, projection);
            std::copy(v.begin(), v.end(), job.features.begin() + static_cast<std::ptrdiff_t>(i * dim));
        }
    });

    for (auto& job : jobs) {
        FeatureBag bag;
        bag.rows = static_cast<std::int64_t>(job.records.size());
        bag.dim = spec.dim;
        bag.features = std::move(job.features);
        for (const auto& r : job.records) {
            bag.coords.push_back(r.x);
            bag.coords.push_back(r.y);
        }
        bag.slide_id = job.slide->slide_id;
        bag.embedder_id = spec.resolved_id();
        bag.mpp = recorded_slide_mpp(job.slide->dir);
        bag.tile_size = job.records.front().w;
        write_features(job.slide->features_path(), bag);
        summary.written.push_back(bag.slide_id);
    }
    return summary;
}

bool ConformanceReport::all_ok() const { return failures() == 0; }

std::size_t ConformanceReport::failures() const {
    std::size_t n = 0;
    for (const auto& s : slides) n += s.ok ? 0 : 1;
    return n;
}

std::string ConformanceReport::to_text() const {
    std::string out;
    for (const auto& s : slides) {
        out += (s.ok ? "PASS " : "FAIL ") + s.slide_id;
        for (const auto& r : s.reasons) out += "\n    " + r;
        out += "\n";
    }
    out += std::to_string(slides.size() - failures()) + "/" + std::to_string(slides.size()) + " slides conform\n";
    return out;
}

SlideConformance validate_slide_features(const SlideEntry& slide) {
    SlideConformance c{slide.slide_id, true, {}};
    auto reject = [&](std::string why) {
        c.ok = false;
        c.reasons.push_back(std::move(why));
    };
    std::vector<TileRecord> manifest;
    if (slide.has_manifest) {
        try {
            manifest = read_manifest(slide.manifest_path());
        } catch (const Error& e) {
            reject(std::string("manifest: ") + e.what());
            return c;
        }
    }
    if (!slide.has_features) {
        if (!manifest.empty()) reject("missing: feature file " + slide.features_path().filename().string());
        return c;
    }
    if (!slide.has_manifest) {
        reject("missing: tile_manifest.jsonl");
        return c;
    }
    FeatureBag bag;
    try {
        bag = read_features(slide.features_path());
    } catch (const Error& e) {
        std::string kind;
        switch (e.code()) {
            case ErrorCode::DtypeMismatch: kind = "dtype"; break;
            case ErrorCode::ShapeMismatch: kind = "shape"; break;
            case ErrorCode::MissingDataset: kind = "missing dataset"; break;
            case ErrorCode::MissingAttribute: kind = "missing attribute"; break;
            case ErrorCode::NonFinite: kind = "non-finite"; break;
            default: kind = "unreadable"; break;
        }
        reject(kind + ": " + e.what());
        return c;
    }
    if (bag.slide_id != slide.slide_id) reject("attribute: slide_id '" + bag.slide_id + "' differs from folder name");
    if (static_cast<std::size_t>(bag.rows) != manifest.size()) {
        reject("coords: " + std::to_string(bag.rows) + " rows but manifest lists " + std::to_string(manifest.size()) + " tiles");
        return c;
    }
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        if (bag.coords[2 * i] != manifest[i].x || bag.coords[2 * i + 1] != manifest[i].y) {
            reject("coords: row " + std::to_string(i) + " differs from manifest");
            break;
        }
    }
    return c;
}

ConformanceReport validate_features(const std::filesystem::path& root) {
    ConformanceReport report;
    for (const auto& s : scan_slides(root)) report.slides.push_back(validate_slide_features(s));
    return report;
}

}  // namespace slidebench
