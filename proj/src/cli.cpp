#include "slidebench/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "slidebench/bench.hpp"
#include "slidebench/checkpoint.hpp"
#include "slidebench/dataset_store.hpp"
#include "slidebench/embedder.hpp"
#include "slidebench/error.hpp"
#include "slidebench/rng.hpp"
#include "slidebench/slide_io.hpp"
#include "slidebench/tiler.hpp"

namespace slidebench {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

[[noreturn]] void usage(const std::string& msg) { throw UsageError(msg); }

ojson config_header(const std::string& subcommand) {
    ojson j;
    j["tool"] = "slidebench";
    j["version"] = SLIDEBENCH_VERSION;
    j["subcommand"] = subcommand;
    return j;
}

// Prints the resolved configuration and writes it to `path`.
void record_config(const ojson& config, const fs::path& path) {
    std::cerr << "[" << config["subcommand"].get<std::string>() << "] config " << config.dump() << "\n";
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text_file(path, config.dump(2) + "\n");
}

std::vector<std::string> path_strings(const std::vector<fs::path>& paths) {
    std::vector<std::string> out;
    for (const auto& p : paths) out.push_back(p.string());
    return out;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    fs::path out;
    fs::path spec;
    int width = 2048;
    int height = 2048;
    double mpp = 0.5;
    std::uint64_t seed = 0;
    int levels = 3;
    int tile_size = 256;
    std::vector<std::string> rects;
    std::vector<std::string> ellipses;
    int cohort = 0;
    fs::path dataset;
    bool force = false;
};

Blob parse_blob(const std::string& text, BlobShape shape) {
    std::vector<double> v;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        try {
            std::size_t used = 0;
            v.push_back(std::stod(piece, &used));
            if (used != piece.size()) throw std::invalid_argument(piece);
        } catch (const std::exception&) {
            usage("bad blob '" + text + "'");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (v.size() != 4) usage("blob '" + text + "' needs four numbers");
    Blob b;
    b.shape = shape;
    if (shape == BlobShape::Rect) {
        // x,y,w,h
        b.rx = v[2] / 2.0;
        b.ry = v[3] / 2.0;
        b.cx = v[0] + b.rx;
        b.cy = v[1] + b.ry;
    } else {
        b.cx = v[0];
        b.cy = v[1];
        b.rx = v[2];
        b.ry = v[3];
    }
    return b;
}

// Random cohort: slide i gets 1-3 ellipses; two slides per patient. Labels are
// a class from the blob count and the tissue fraction as a regression target.
int run_synth_cohort(const SynthArgs& a) {
    fs::create_directories(a.out);
    const fs::path settings = (a.dataset.empty() ? a.out : a.dataset) / "task-settings";
    fs::create_directories(settings);
    std::string labels = "slide_id,patient_id,grade,tissue_fraction\n";
    ojson specs = ojson::array();
    for (int i = 0; i < a.cohort; ++i) {
        CounterRng rng(CounterRng::mix(a.seed + static_cast<std::uint64_t>(i)));
        SynthSpec s;
        s.width = a.width;
        s.height = a.height;
        s.mpp = a.mpp;
        s.seed = a.seed * 1000003ULL + static_cast<std::uint64_t>(i);
        s.levels = a.levels;
        s.tile_size = a.tile_size;
        const int n_blobs = 1 + static_cast<int>(rng.below(3));
        for (int b = 0; b < n_blobs; ++b) {
            Blob blob;
            blob.rx = std::floor(rng.uniform(0.08, 0.2) * a.width);
            blob.ry = std::floor(rng.uniform(0.08, 0.2) * a.height);
            blob.cx = std::floor(rng.uniform(blob.rx, a.width - blob.rx));
            blob.cy = std::floor(rng.uniform(blob.ry, a.height - blob.ry));
            s.blobs.push_back(blob);
        }
        char id[32];
        std::snprintf(id, sizeof id, "slide_%03d", i);
        const fs::path path = a.out / (std::string(id) + ".tiff");
        if (a.force || !fs::exists(path)) synth_slide(s, path);
        const Raster px = render_synth_level0(s);
        std::int64_t tissue = 0;
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) {
                for (const auto& blob : s.blobs) {
                    if (blob.contains(x, y)) {
                        ++tissue;
                        break;
                    }
                }
            }
        }
        char row[128];
        std::snprintf(row, sizeof row, "%s,P%03d,%s,%.4f\n", id, i / 2, n_blobs >= 2 ? "high" : "low",
                      static_cast<double>(tissue) / (static_cast<double>(s.width) * s.height));
        labels += row;
        specs.push_back(ojson::parse(synth_spec_to_json(s)));
    }
    const std::vector<TaskConfig> tasks = {
        {"grade", TaskKind::Classification, {"low", "high"}, "grade"},
        {"tissue_fraction", TaskKind::Regression, {}, "tissue_fraction"},
    };
    write_text_file(settings / "task_configs.json", task_configs_to_json(tasks));
    write_text_file(settings / "labels.csv", labels);

    ojson cfg = config_header("synth");
    cfg["out"] = a.out.string();
    cfg["dataset"] = a.dataset.string();
    cfg["cohort"] = a.cohort;
    cfg["width"] = a.width;
    cfg["height"] = a.height;
    cfg["mpp"] = a.mpp;
    cfg["seed"] = a.seed;
    cfg["levels"] = a.levels;
    cfg["tile_size"] = a.tile_size;
    cfg["slides"] = specs;
    record_config(cfg, a.out / "run_config.json");
    std::cout << "wrote " << a.cohort << " slides to " << a.out.string() << "\n";
    return kExitOk;
}

int run_synth(const SynthArgs& a) {
    if (a.cohort > 0) return run_synth_cohort(a);
    if (a.out.empty()) usage("--out is required");
    SynthSpec s;
    if (!a.spec.empty()) {
        s = parse_synth_spec(read_text_file(a.spec));
    } else {
        s.width = a.width;
        s.height = a.height;
        s.mpp = a.mpp;
        s.seed = a.seed;
        s.levels = a.levels;
        s.tile_size = a.tile_size;
        for (const auto& r : a.rects) s.blobs.push_back(parse_blob(r, BlobShape::Rect));
        for (const auto& e : a.ellipses) s.blobs.push_back(parse_blob(e, BlobShape::Ellipse));
    }
    ojson cfg = config_header("synth");
    cfg["out"] = a.out.string();
    cfg["spec"] = ojson::parse(synth_spec_to_json(s));
    const fs::path cfg_path = a.out.parent_path() / (a.out.stem().string() + ".run_config.json");
    if (fs::exists(a.out) && !a.force) {
        std::cout << "exists, skipped: " << a.out.string() << "\n";
        return kExitOk;
    }
    record_config(cfg, cfg_path);
    synth_slide(s, a.out);
    std::cout << "wrote " << a.out.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// crop

struct CropArgs {
    std::vector<fs::path> slides;
    fs::path slides_dir;
    fs::path out;
    TilePlan plan;
    MaskOptions mask;
    int workers = 1;
    bool qc = false;
    bool force = false;
};

int run_crop(CropArgs a) {
    if (!a.slides_dir.empty()) {
        std::vector<fs::path> found;
        for (const auto& e : fs::directory_iterator(a.slides_dir)) {
            const auto ext = e.path().extension().string();
            if (e.is_regular_file() && (ext == ".tif" || ext == ".tiff")) found.push_back(e.path());
        }
        std::sort(found.begin(), found.end());
        a.slides.insert(a.slides.end(), found.begin(), found.end());
    }
    if (a.slides.empty()) usage("no slides given (--slide or --slides-dir)");
    a.plan.validate();

    CropOptions options;
    options.workers = a.workers;
    options.emit_qc = a.qc;
    options.mask = a.mask;
    for (const auto& path : a.slides) {
        const fs::path manifest = a.out / path.stem() / "tile_manifest.jsonl";
        if (fs::exists(manifest) && !a.force) {
            std::cout << path.stem().string() << ": exists, skipped\n";
            continue;
        }
        std::cerr << "[crop] " << path.string() << " tile=" << a.plan.tile_size << " stride=" << a.plan.stride
                  << " mpp=" << a.plan.target_mpp << " chunk=" << a.plan.chunk_size
                  << " min_coverage=" << a.plan.min_coverage << " min_variance=" << a.plan.min_variance
                  << " thumbnail_mpp=" << a.mask.thumbnail_mpp << " min_region_area=" << a.mask.min_region_area
                  << " workers=" << a.workers << "\n";
        const auto result = crop_slide_file(path, a.plan, a.out, options);
        std::cout << path.stem().string() << ": " << result.tiles.size() << " tiles of " << result.candidates
                  << " candidates\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// embed / validate

struct EmbedArgs {
    fs::path root;
    std::string kind = "native";
    EmbedderSpec spec;
    EmbedOptions options;
};

int run_embed(EmbedArgs a) {
    if (a.kind == "native") a.spec.kind = EmbedderKind::Native;
    else if (a.kind == "external") a.spec.kind = EmbedderKind::External;
    else usage("unknown embedder '" + a.kind + "'");
    if (a.spec.kind == EmbedderKind::External && a.options.adapter_cmd.empty()) {
        usage("--adapter-cmd is required for the external embedder");
    }
    ojson cfg = config_header("embed");
    cfg["root"] = a.root.string();
    cfg["embedder"] = a.kind;
    cfg["embedder_id"] = a.spec.resolved_id();
    cfg["dim"] = a.spec.dim;
    cfg["seed"] = a.spec.seed;
    cfg["batch"] = a.options.batch;
    cfg["adapter_cmd"] = a.options.adapter_cmd;
    cfg["force"] = a.options.force;
    record_config(cfg, a.root / "runs" / "embed" / "run_config.json");

    const auto summary = embed_dataset(a.root, a.spec, a.options);
    for (const auto& s : summary.written) std::cout << s << ": written\n";
    for (const auto& s : summary.skipped_existing) std::cout << s << ": exists, skipped\n";
    for (const auto& s : summary.empty) std::cout << s << ": no tiles\n";
    for (const auto& s : summary.rejected) std::cout << s << ": rejected\n";
    return summary.rejected.empty() ? kExitOk : kExitFailure;
}

int run_validate(const fs::path& root) {
    ojson cfg = config_header("validate");
    cfg["root"] = root.string();
    record_config(cfg, root / "runs" / "validate" / "run_config.json");
    const auto report = validate_features(root);
    std::cout << report.to_text();
    return report.all_ok() ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------
// split

struct SplitArgs {
    fs::path root;
    std::uint64_t seed = 0;
    std::string ratios = "7:1:2";
    std::string stratify;
    bool force = false;
};

SplitRatios parse_ratios(const std::string& text) {
    SplitRatios r;
    double v[3];
    char tail = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf:%lf%c", &v[0], &v[1], &v[2], &tail) != 3) {
        usage("ratios must look like 7:1:2");
    }
    r.train = v[0];
    r.val = v[1];
    r.test = v[2];
    return r;
}

int run_split(const SplitArgs& a) {
    const fs::path out = a.root / "task-settings" / "splits.csv";
    const Dataset ds = load_dataset(a.root);
    SplitOptions options;
    options.seed = a.seed;
    options.ratios = parse_ratios(a.ratios);
    if (!a.stratify.empty()) options.stratify_column = a.stratify;

    ojson cfg = config_header("split");
    cfg["root"] = a.root.string();
    cfg["seed"] = a.seed;
    cfg["ratios"] = a.ratios;
    cfg["stratify"] = a.stratify;
    if (fs::exists(out) && !a.force) {
        std::cout << "exists, skipped: " << out.string() << "\n";
        return kExitOk;
    }
    record_config(cfg, a.root / "runs" / "split" / "run_config.json");
    const auto assignment = make_splits(ds.labels, options);
    write_text_file(out, splits_to_csv(assignment.by_slide));
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& [p, s] : assignment.by_patient) ++counts[static_cast<int>(s)];
    std::cout << "patients train/val/test: " << counts[0] << "/" << counts[1] << "/" << counts[2] << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train / eval / report

struct TrainArgs {
    fs::path root;
    fs::path out;
    std::vector<std::string> tasks;
    std::string model = "ABMIL";
    TrainConfig config;
    bool no_timestamps = false;
    bool force = false;
};

int run_train(TrainArgs a) {
    a.config.kind = parse_model_kind(a.model);
    a.config.log_timestamps = !a.no_timestamps;
    const Dataset ds = load_dataset(a.root);
    std::vector<std::string> names = a.tasks;
    if (names.empty()) {
        for (const auto& t : ds.tasks) names.push_back(t.name);
    }
    ojson cfg = config_header("train");
    cfg["root"] = a.root.string();
    cfg["out"] = a.out.string();
    cfg["tasks"] = names;
    cfg["model"] = to_string(a.config.kind);
    cfg["hidden"] = a.config.hidden;
    cfg["epochs"] = a.config.max_epochs;
    cfg["patience"] = a.config.patience;
    cfg["lr"] = a.config.adam.lr;
    cfg["beta1"] = a.config.adam.beta1;
    cfg["beta2"] = a.config.adam.beta2;
    cfg["eps"] = a.config.adam.eps;
    cfg["weight_decay"] = a.config.adam.weight_decay;
    cfg["seed"] = a.config.seed;
    if (fs::exists(a.out / "checkpoint.bin") && !a.force) {
        std::cout << "exists, skipped: " << (a.out / "checkpoint.bin").string() << "\n";
        return kExitOk;
    }
    record_config(cfg, a.out / "run_config.json");
    const auto result = train_model(ds, names, a.config, a.out);
    std::cout << "trained " << to_string(a.config.kind) << " for " << result.log.size() << " epochs, best epoch "
              << result.best_epoch << "\n";
    return kExitOk;
}

struct EvalArgs {
    fs::path root;
    fs::path checkpoint;
    fs::path out;
    std::string subset = "test";
    std::string correlation = "pearson";
    bool force = false;
};

int run_eval(const EvalArgs& a) {
    const fs::path metrics_path = a.out / "metrics.json";
    CorrelationKind corr;
    if (a.correlation == "pearson") corr = CorrelationKind::Pearson;
    else if (a.correlation == "spearman") corr = CorrelationKind::Spearman;
    else usage("unknown correlation '" + a.correlation + "'");
    const Subset subset = parse_subset(a.subset);

    std::uint64_t seed = 0;
    const fs::path train_cfg = a.checkpoint.parent_path() / "run_config.json";
    if (fs::exists(train_cfg)) {
        const auto j = nlohmann::json::parse(read_text_file(train_cfg), nullptr, false);
        if (j.is_object() && j.contains("seed") && j["seed"].is_number_unsigned()) seed = j["seed"].get<std::uint64_t>();
    }
    ojson cfg = config_header("eval");
    cfg["root"] = a.root.string();
    cfg["checkpoint"] = a.checkpoint.string();
    cfg["out"] = a.out.string();
    cfg["subset"] = a.subset;
    cfg["correlation"] = a.correlation;
    cfg["seed"] = seed;
    if (fs::exists(metrics_path) && !a.force) {
        std::cout << "exists, skipped: " << metrics_path.string() << "\n";
        return kExitOk;
    }
    record_config(cfg, a.out / "run_config.json");
    const Dataset ds = load_dataset(a.root);
    const Checkpoint ckpt = read_checkpoint(a.checkpoint);
    MetricsReport report = evaluate(ds, ckpt, subset, corr);
    report.seed = seed;
    write_text_file(metrics_path, report.to_json());
    for (const auto& e : report.entries) {
        std::cout << e.task << " " << e.metric << " ";
        if (e.value) std::cout << *e.value;
        else if (e.error) std::cout << to_string(*e.error);
        std::cout << " (n=" << e.n << ")\n";
    }
    return kExitOk;
}

struct ReportArgs {
    std::vector<fs::path> metrics;
    fs::path out;
    std::vector<std::string> models;
    std::vector<std::string> tasks;
    bool force = false;
};

int run_report(const ReportArgs& a) {
    ojson cfg = config_header("report");
    cfg["metrics"] = path_strings(a.metrics);
    cfg["out"] = a.out.string();
    cfg["models"] = a.models;
    cfg["tasks"] = a.tasks;
    if (fs::exists(a.out / "bench.md") && fs::exists(a.out / "bench.csv") && !a.force) {
        std::cout << "exists, skipped: " << (a.out / "bench.md").string() << "\n";
        return kExitOk;
    }
    record_config(cfg, a.out / "run_config.json");
    std::vector<MetricsReport> reports;
    for (const auto& m : a.metrics) reports.push_back(MetricsReport::from_json(read_text_file(m)));
    const auto tables = report(reports, a.models, a.tasks);
    write_text_file(a.out / "bench.md", tables.markdown);
    write_text_file(a.out / "bench.csv", tables.csv);
    std::cout << tables.markdown;
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"slidebench: slide tiling, feature bags and MIL benchmarks"};
    app.set_version_flag("--version", std::string(SLIDEBENCH_VERSION));
    app.require_subcommand(1);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Write a deterministic synthetic pyramidal slide (or a labeled cohort)");
    c_synth->add_option("--out", synth.out, "Output .tiff (or directory with --cohort)")->required();
    c_synth->add_option("--spec", synth.spec, "JSON spec {width,height,mpp,seed,blobs,levels,tile_size}");
    c_synth->add_option("--width", synth.width, "Level-0 width")->capture_default_str();
    c_synth->add_option("--height", synth.height, "Level-0 height")->capture_default_str();
    c_synth->add_option("--mpp", synth.mpp, "Level-0 microns per pixel")->capture_default_str();
    c_synth->add_option("--seed", synth.seed, "Noise seed")->capture_default_str();
    c_synth->add_option("--levels", synth.levels, "Pyramid levels")->capture_default_str();
    c_synth->add_option("--tile-size", synth.tile_size, "TIFF tile edge")->capture_default_str();
    c_synth->add_option("--rect", synth.rects, "Tissue rectangle x,y,w,h (repeatable)");
    c_synth->add_option("--ellipse", synth.ellipses, "Tissue ellipse cx,cy,rx,ry (repeatable)");
    c_synth->add_option("--cohort", synth.cohort, "Write this many random slides plus task-settings")->capture_default_str();
    c_synth->add_option("--dataset", synth.dataset, "Dataset root for the cohort's task-settings (default --out)");
    c_synth->add_flag("--force", synth.force, "Overwrite existing outputs");

    CropArgs crop;
    auto* c_crop = app.add_subcommand("crop", "Tissue mask, tile, filter, and write tiles plus manifest");
    c_crop->add_option("--slide", crop.slides, "Slide file (repeatable)");
    c_crop->add_option("--slides-dir", crop.slides_dir, "Crop every .tif/.tiff in this directory");
    c_crop->add_option("--out", crop.out, "Dataset root")->required();
    c_crop->add_option("--mpp", crop.plan.target_mpp, "Target microns per pixel")->capture_default_str();
    c_crop->add_option("--tile", crop.plan.tile_size, "Tile edge in pixels at target mpp")->capture_default_str();
    auto* stride_opt = c_crop->add_option("--stride", crop.plan.stride, "Grid stride in pixels at target mpp (default --tile)");
    c_crop->add_option("--chunk", crop.plan.chunk_size, "Chunk edge in level-0 pixels")->capture_default_str();
    c_crop->add_option("--min-coverage", crop.plan.min_coverage, "Minimum tissue coverage")->capture_default_str();
    c_crop->add_option("--min-variance", crop.plan.min_variance, "Minimum luminance variance")->capture_default_str();
    c_crop->add_option("--thumbnail-mpp", crop.mask.thumbnail_mpp, "Mask thumbnail microns per pixel")->capture_default_str();
    c_crop->add_option("--min-region-area", crop.mask.min_region_area, "Minimum region area in thumbnail pixels")->capture_default_str();
    c_crop->add_option("--workers", crop.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    c_crop->add_flag("--emit-qc", crop.qc, "Also write qc_mask.png");
    c_crop->add_flag("--force", crop.force, "Re-crop slides that already have a manifest");

    EmbedArgs embed;
    auto* c_embed = app.add_subcommand("embed", "Embed every slide's tiles into <slide_id>.h5");
    c_embed->add_option("root", embed.root, "Dataset root")->required();
    c_embed->add_option("--embedder", embed.kind, "native or external")->capture_default_str()->check(CLI::IsMember({"native", "external"}));
    c_embed->add_option("--dim", embed.spec.dim, "Feature dimension D")->capture_default_str()->check(CLI::PositiveNumber);
    c_embed->add_option("--seed", embed.spec.seed, "Native projection seed")->capture_default_str();
    c_embed->add_option("--embedder-id", embed.spec.embedder_id, "Embedder id (native default: native8x8-s<seed>-d<D>)");
    c_embed->add_option("--adapter-cmd", embed.options.adapter_cmd, "External adapter command");
    c_embed->add_option("--batch", embed.options.batch, "Tiles per batch")->capture_default_str()->check(CLI::PositiveNumber);
    c_embed->add_option("--workers", embed.options.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    c_embed->add_flag("--force", embed.options.force, "Rewrite existing feature files");

    fs::path validate_root;
    auto* c_validate = app.add_subcommand("validate", "Check every feature file against the contract and its manifest");
    c_validate->add_option("root", validate_root, "Dataset root")->required();

    SplitArgs split;
    auto* c_split = app.add_subcommand("split", "Patient-wise train/val/test split into task-settings/splits.csv");
    c_split->add_option("root", split.root, "Dataset root")->required();
    c_split->add_option("--seed", split.seed, "Shuffle seed")->capture_default_str();
    c_split->add_option("--ratios", split.ratios, "train:val:test")->capture_default_str();
    c_split->add_option("--stratify", split.stratify, "Label column to stratify on (off by default)");
    c_split->add_flag("--force", split.force, "Overwrite an existing splits.csv");

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train a slide-level model; writes checkpoint.bin and train_log.jsonl");
    c_train->add_option("root", train.root, "Dataset root")->required();
    c_train->add_option("--out", train.out, "Run directory")->required();
    c_train->add_option("--task", train.tasks, "Task name (repeatable; default all tasks)");
    c_train->add_option("--model", train.model, "SlideAve, SlideMax or ABMIL")->capture_default_str()->check(CLI::IsMember({"SlideAve", "SlideMax", "ABMIL"}, CLI::ignore_case));
    c_train->add_option("--hidden", train.config.hidden, "Attention hidden size L")->capture_default_str();
    c_train->add_option("--epochs", train.config.max_epochs, "Maximum epochs")->capture_default_str();
    c_train->add_option("--patience", train.config.patience, "Early-stopping patience")->capture_default_str();
    c_train->add_option("--lr", train.config.adam.lr, "Adam learning rate")->capture_default_str();
    c_train->add_option("--beta1", train.config.adam.beta1, "Adam beta1")->capture_default_str();
    c_train->add_option("--beta2", train.config.adam.beta2, "Adam beta2")->capture_default_str();
    c_train->add_option("--eps", train.config.adam.eps, "Adam epsilon")->capture_default_str();
    c_train->add_option("--weight-decay", train.config.adam.weight_decay, "Decoupled weight decay")->capture_default_str();
    c_train->add_option("--seed", train.config.seed, "Initialization and shuffle seed")->capture_default_str();
    c_train->add_flag("--no-timestamps", train.no_timestamps, "Omit timestamps from train_log.jsonl");
    c_train->add_flag("--force", train.force, "Retrain when checkpoint.bin exists");

    EvalArgs eval;
    auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on one subset; writes metrics.json");
    c_eval->add_option("root", eval.root, "Dataset root")->required();
    c_eval->add_option("--checkpoint", eval.checkpoint, "checkpoint.bin")->required();
    c_eval->add_option("--out", eval.out, "Output directory")->required();
    c_eval->add_option("--subset", eval.subset, "train, val or test")->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
    c_eval->add_option("--correlation", eval.correlation, "pearson or spearman")->capture_default_str()->check(CLI::IsMember({"pearson", "spearman"}));
    c_eval->add_flag("--force", eval.force, "Overwrite an existing metrics.json");

    ReportArgs rep;
    auto* c_report = app.add_subcommand("report", "Task x model tables: bench.md and bench.csv");
    c_report->add_option("--metrics", rep.metrics, "metrics.json (repeatable)");
    c_report->add_option("--out", rep.out, "Output directory")->required();
    c_report->add_option("--model", rep.models, "Column order (repeatable)");
    c_report->add_option("--task", rep.tasks, "Row order (repeatable)");
    c_report->add_flag("--force", rep.force, "Overwrite existing tables");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        std::cout << SLIDEBENCH_VERSION << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* failing = &app;
        for (auto* sub : app.get_subcommands()) failing = sub;
        std::cerr << failing->help();
        return kExitUsage;
    }

    try {
        if (*c_synth) return run_synth(synth);
        if (*c_crop) {
            if (stride_opt->count() == 0) crop.plan.stride = crop.plan.tile_size;
            return run_crop(crop);
        }
        if (*c_embed) return run_embed(embed);
        if (*c_validate) return run_validate(validate_root);
        if (*c_split) return run_split(split);
        if (*c_train) return run_train(train);
        if (*c_eval) return run_eval(eval);
        if (*c_report) return run_report(rep);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

}  // namespace slidebench
