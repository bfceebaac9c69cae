#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "slidebench/bench.hpp"
#include "slidebench/checkpoint.hpp"
#include "slidebench/cli.hpp"
#include "slidebench/dataset_store.hpp"
#include "slidebench/embedder.hpp"
#include "slidebench/error.hpp"
#include "slidebench/slide_io.hpp"
#include "slidebench/tiler.hpp"
#include "slidebench/tissue_mask.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace slidebench;

namespace {

PyObject* error_type = nullptr;

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using I32Array = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;

py::array_t<std::uint8_t> to_numpy(const Raster& r) {
    std::vector<py::ssize_t> shape = {r.height, r.width};
    if (r.channels > 1) shape.push_back(r.channels);
    py::array_t<std::uint8_t> out(shape);
    std::memcpy(out.mutable_data(), r.data.data(), r.data.size());
    return out;
}

Raster from_numpy(const U8Array& a) {
    if (a.ndim() != 2 && !(a.ndim() == 3 && (a.shape(2) == 1 || a.shape(2) == 3))) {
        throw py::value_error("expected an HxW or HxWxC uint8 array with C in {1, 3}");
    }
    Raster r(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1);
    std::memcpy(r.data.data(), a.data(), r.data.size());
    return r;
}

py::dict region_dict(const Region& r) {
    py::dict d;
    d["label"] = r.label;
    d["bbox"] = py::make_tuple(r.x0, r.y0, r.x1, r.y1);
    d["area"] = r.area;
    return d;
}

py::dict record_dict(const TileRecord& r) {
    py::dict d;
    d["x"] = r.x;
    d["y"] = r.y;
    d["w"] = r.w;
    d["h"] = r.h;
    d["coverage"] = r.coverage;
    d["variance"] = r.variance;
    d["path"] = r.path;
    return d;
}

SynthSpec make_spec(int width, int height, double mpp, std::uint64_t seed, const std::vector<py::tuple>& blobs, int levels,
                    int tile_size) {
    SynthSpec s;
    s.width = width;
    s.height = height;
    s.mpp = mpp;
    s.seed = seed;
    s.levels = levels;
    s.tile_size = tile_size;
    for (const auto& t : blobs) {
        if (t.size() != 4 && t.size() != 5) throw py::value_error("blob must be (cx, cy, rx, ry[, 'ellipse'|'rect'])");
        Blob b{t[0].cast<double>(), t[1].cast<double>(), t[2].cast<double>(), t[3].cast<double>(), BlobShape::Ellipse};
        if (t.size() == 5) {
            const auto shape = t[4].cast<std::string>();
            if (shape == "rect") b.shape = BlobShape::Rect;
            else if (shape != "ellipse") throw py::value_error("blob shape must be 'ellipse' or 'rect'");
        }
        s.blobs.push_back(b);
    }
    return s;
}

}  // namespace

PYBIND11_MODULE(_slidebench, m) {
    m.doc() = "Whole-slide tiling, embedding, and slide-level MIL benchmarking";
    m.attr("__version__") = SLIDEBENCH_VERSION;
    set_warnings_enabled(false);

    error_type = py::exception<Error>(m, "SlidebenchError").release().ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object inst = py::handle(error_type)(e.what());
            inst.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(error_type, inst.ptr());
        }
    });

    m.def("set_warnings_enabled", &set_warnings_enabled, py::arg("enabled"));

    m.def("run_cli", [](std::vector<std::string> args) {
        py::gil_scoped_release release;
        return run_cli(args);
    }, py::arg("args"), "Runs the command-line tool in-process and returns its exit status.");

    // slide_io
    m.def("synth_slide", [](const fs::path& path, int width, int height, double mpp, std::uint64_t seed,
                            const std::vector<py::tuple>& blobs, int levels, int tile_size) {
        synth_slide(make_spec(width, height, mpp, seed, blobs, levels, tile_size), path);
    }, py::arg("path"), py::arg("width") = 2048, py::arg("height") = 2048, py::arg("mpp") = 0.5, py::arg("seed") = 0,
       py::arg("blobs") = std::vector<py::tuple>{}, py::arg("levels") = 3, py::arg("tile_size") = 256);
    m.def("synth_slide_json", [](const fs::path& path, const std::string& spec) { synth_slide(parse_synth_spec(spec), path); },
          py::arg("path"), py::arg("spec"));

    py::class_<SlideSource>(m, "Slide")
        .def(py::init([](const fs::path& path) { return SlideSource::open(path); }), py::arg("path"))
        .def_property_readonly("slide_id", &SlideSource::slide_id)
        .def_property_readonly("width", &SlideSource::width)
        .def_property_readonly("height", &SlideSource::height)
        .def_property_readonly("mpp", &SlideSource::level0_mpp)
        .def_property_readonly("levels", [](const SlideSource& s) {
            py::list out;
            for (const auto& l : s.levels()) {
                py::dict d;
                d["index"] = l.index;
                d["width"] = l.width;
                d["height"] = l.height;
                d["mpp"] = l.mpp;
                d["downsample"] = l.downsample;
                out.append(d);
            }
            return out;
        })
        .def("level_for_mpp", [](const SlideSource& s, double mpp) {
            const auto c = s.level_for_mpp(mpp);
            return py::make_tuple(c.level, c.scale, c.effective_mpp, c.degraded);
        }, py::arg("target_mpp"))
        .def("read_region", [](const SlideSource& s, int level, int x, int y, int w, int h) {
            Raster r;
            {
                py::gil_scoped_release release;
                r = s.read_region(level, x, y, w, h);
            }
            return to_numpy(r);
        }, py::arg("level"), py::arg("x"), py::arg("y"), py::arg("width"), py::arg("height"),
           "RGB pixels of `level`; origin in level-0 pixels, size in level pixels.");

    // tissue_mask
    m.def("otsu_threshold", [](const std::vector<std::uint64_t>& hist) {
        if (hist.size() != 256) throw py::value_error("histogram must have 256 bins");
        Histogram h{};
        std::copy(hist.begin(), hist.end(), h.begin());
        const auto r = otsu_threshold(h);
        return py::make_tuple(r.threshold, r.degenerate);
    }, py::arg("hist"));
    m.def("saturation", [](const U8Array& rgb) { return to_numpy(saturation_channel(from_numpy(rgb))); }, py::arg("rgb"));
    m.def("label_components", [](const U8Array& mask, std::int64_t min_area) {
        const Raster r = from_numpy(mask);
        const auto labels = label_image(r, min_area);
        py::array_t<std::int32_t> img({r.height, r.width});
        std::copy(labels.begin(), labels.end(), img.mutable_data());
        py::list regions;
        for (const auto& reg : label_components(r, min_area)) regions.append(region_dict(reg));
        return py::make_tuple(img, regions);
    }, py::arg("mask"), py::arg("min_region_area") = 64);
    m.def("tissue_mask", [](const fs::path& path, double thumbnail_mpp, std::int64_t min_region_area) {
        MaskOptions o;
        o.thumbnail_mpp = thumbnail_mpp;
        o.min_region_area = min_region_area;
        const auto t = compute_tissue_mask(SlideSource::open(path), o);
        py::dict d;
        d["mask"] = to_numpy(t.mask);
        d["threshold"] = t.threshold;
        d["degenerate"] = t.degenerate;
        d["scale_to_level0"] = t.scale_to_level0;
        py::list regions;
        for (const auto& r : t.regions) regions.append(region_dict(r));
        d["regions"] = regions;
        return d;
    }, py::arg("path"), py::arg("thumbnail_mpp") = 8.0, py::arg("min_region_area") = 64);

    // tiler
    m.def("crop", [](const fs::path& path, const fs::path& out_root, int tile, std::optional<int> stride, double mpp,
                     double min_coverage, double min_variance, int chunk, double thumbnail_mpp, std::int64_t min_region_area,
                     int workers, bool emit_qc) {
        TilePlan plan;
        plan.tile_size = tile;
        plan.stride = stride.value_or(tile);
        plan.target_mpp = mpp;
        plan.min_coverage = min_coverage;
        plan.min_variance = min_variance;
        plan.chunk_size = chunk;
        plan.validate();
        CropOptions o;
        o.workers = workers;
        o.emit_qc = emit_qc;
        o.mask.thumbnail_mpp = thumbnail_mpp;
        o.mask.min_region_area = min_region_area;
        CropResult r;
        {
            py::gil_scoped_release release;
            r = crop_slide_file(path, plan, out_root, o);
        }
        py::list tiles;
        for (const auto& t : r.tiles) tiles.append(record_dict(t));
        return tiles;
    }, py::arg("path"), py::arg("out_root"), py::arg("tile") = 224, py::arg("stride") = py::none(), py::arg("mpp") = 0.5,
       py::arg("min_coverage") = 0.25, py::arg("min_variance") = 15.0, py::arg("chunk") = 4096, py::arg("thumbnail_mpp") = 8.0,
       py::arg("min_region_area") = 64, py::arg("workers") = 1, py::arg("emit_qc") = false,
       "Tiles one slide into out_root/<slide_id>/ and returns the manifest records.");
    m.def("read_manifest", [](const fs::path& path) {
        py::list out;
        for (const auto& r : read_manifest(path)) out.append(record_dict(r));
        return out;
    }, py::arg("path"));

    // dataset_store
    m.def("read_features", [](const fs::path& path) {
        const FeatureBag b = read_features(path);
        py::array_t<float> feats({b.rows, b.dim});
        std::copy(b.features.begin(), b.features.end(), feats.mutable_data());
        py::array_t<std::int32_t> coords({b.rows, std::int64_t{2}});
        std::copy(b.coords.begin(), b.coords.end(), coords.mutable_data());
        py::dict d;
        d["features"] = feats;
        d["coords_xy"] = coords;
        d["slide_id"] = b.slide_id;
        d["embedder_id"] = b.embedder_id;
        d["mpp"] = b.mpp;
        d["tile_size"] = b.tile_size;
        return d;
    }, py::arg("path"));
    m.def("write_features", [](const fs::path& path, const F32Array& features, const I32Array& coords, const std::string& slide_id,
                               const std::string& embedder_id, double mpp, std::int64_t tile_size) {
        if (features.ndim() != 2 || coords.ndim() != 2) throw py::value_error("features and coords must be 2-D");
        FeatureBag b;
        b.rows = features.shape(0);
        b.dim = features.shape(1);
        b.features.assign(features.data(), features.data() + features.size());
        b.coords.assign(coords.data(), coords.data() + coords.size());
        if (coords.shape(1) != 2) b.coords.push_back(0);
        b.slide_id = slide_id;
        b.embedder_id = embedder_id;
        b.mpp = mpp;
        b.tile_size = tile_size;
        write_features(path, b);
    }, py::arg("path"), py::arg("features"), py::arg("coords_xy"), py::arg("slide_id"), py::arg("embedder_id"),
       py::arg("mpp"), py::arg("tile_size"));

    // embedder
    m.def("native_embed", [](const U8Array& tile, int dim, std::uint64_t seed) {
        return native_embed(from_numpy(tile), Projection(dim, seed));
    }, py::arg("tile"), py::arg("dim") = 128, py::arg("seed") = 42);
    m.def("embed", [](const fs::path& root, const std::string& embedder, int dim, std::uint64_t seed, const std::string& embedder_id,
                      const std::string& adapter_cmd, int batch, int workers, bool force) {
        EmbedderSpec spec;
        if (embedder == "native") spec.kind = EmbedderKind::Native;
        else if (embedder == "external") spec.kind = EmbedderKind::External;
        else throw py::value_error("embedder must be 'native' or 'external'");
        spec.dim = dim;
        spec.seed = seed;
        spec.embedder_id = embedder_id;
        EmbedOptions o;
        o.adapter_cmd = adapter_cmd;
        o.batch = batch;
        o.workers = workers;
        o.force = force;
        EmbedSummary s;
        {
            py::gil_scoped_release release;
            s = embed_dataset(root, spec, o);
        }
        py::dict d;
        d["written"] = s.written;
        d["skipped_existing"] = s.skipped_existing;
        d["empty"] = s.empty;
        d["rejected"] = s.rejected;
        return d;
    }, py::arg("root"), py::arg("embedder") = "native", py::arg("dim") = 128, py::arg("seed") = 42, py::arg("embedder_id") = "",
       py::arg("adapter_cmd") = "", py::arg("batch") = 64, py::arg("workers") = 1, py::arg("force") = false);
    m.def("validate", [](const fs::path& root) {
        const auto r = validate_features(root);
        py::list out;
        for (const auto& s : r.slides) {
            py::dict d;
            d["slide_id"] = s.slide_id;
            d["ok"] = s.ok;
            d["reasons"] = s.reasons;
            out.append(d);
        }
        return out;
    }, py::arg("root"), "Per-slide feature-file conformance.");

    // bench
    m.def("split", [](const fs::path& root, std::uint64_t seed, std::tuple<double, double, double> ratios,
                      std::optional<std::string> stratify, bool write) {
        const Dataset ds = load_dataset(root);
        SplitOptions o;
        o.seed = seed;
        o.ratios = {std::get<0>(ratios), std::get<1>(ratios), std::get<2>(ratios)};
        o.stratify_column = stratify;
        const auto a = make_splits(ds.labels, o);
        if (write) write_text_file(ds.settings_dir() / "splits.csv", splits_to_csv(a.by_slide));
        std::map<std::string, std::string> out;
        for (const auto& [slide, subset] : a.by_slide) out[slide] = to_string(subset);
        return out;
    }, py::arg("root"), py::arg("seed") = 0, py::arg("ratios") = std::make_tuple(7.0, 1.0, 2.0),
       py::arg("stratify") = py::none(), py::arg("write") = true);
    m.def("split_counts", [](std::size_t patients, std::tuple<double, double, double> ratios) {
        const auto c = split_counts(patients, {std::get<0>(ratios), std::get<1>(ratios), std::get<2>(ratios)});
        return py::make_tuple(c[0], c[1], c[2]);
    }, py::arg("patients"), py::arg("ratios") = std::make_tuple(7.0, 1.0, 2.0));
    m.def("train", [](const fs::path& root, const fs::path& out_dir, std::vector<std::string> tasks, const std::string& model,
                      int hidden, int epochs, int patience, double lr, double weight_decay, std::uint64_t seed, bool timestamps) {
        TrainConfig c;
        c.kind = parse_model_kind(model);
        c.hidden = hidden;
        c.max_epochs = epochs;
        c.patience = patience;
        c.adam.lr = lr;
        c.adam.weight_decay = weight_decay;
        c.seed = seed;
        c.log_timestamps = timestamps;
        TrainResult r;
        {
            py::gil_scoped_release release;
            const Dataset ds = load_dataset(root);
            if (tasks.empty()) {
                for (const auto& t : ds.tasks) tasks.push_back(t.name);
            }
            r = train_model(ds, tasks, c, out_dir);
        }
        py::list log;
        for (const auto& e : r.log) {
            py::dict d;
            d["epoch"] = e.epoch;
            d["train_loss"] = e.train_loss;
            d["val_metric"] = e.val_metric ? py::cast(*e.val_metric) : py::none();
            log.append(d);
        }
        py::dict d;
        d["best_epoch"] = r.best_epoch;
        d["log"] = log;
        d["checkpoint"] = out_dir / "checkpoint.bin";
        return d;
    }, py::arg("root"), py::arg("out_dir"), py::arg("tasks") = std::vector<std::string>{}, py::arg("model") = "ABMIL",
       py::arg("hidden") = 128, py::arg("epochs") = 200, py::arg("patience") = 20, py::arg("lr") = 1e-4,
       py::arg("weight_decay") = 1e-5, py::arg("seed") = 0, py::arg("timestamps") = true);
    m.def("evaluate", [](const fs::path& root, const fs::path& checkpoint, const std::string& subset, const std::string& correlation) {
        CorrelationKind kind;
        if (correlation == "pearson") kind = CorrelationKind::Pearson;
        else if (correlation == "spearman") kind = CorrelationKind::Spearman;
        else throw py::value_error("correlation must be 'pearson' or 'spearman'");
        return evaluate(load_dataset(root), read_checkpoint(checkpoint), parse_subset(subset), kind).to_json();
    }, py::arg("root"), py::arg("checkpoint"), py::arg("subset") = "test", py::arg("correlation") = "pearson",
       "Metrics report as JSON text.");
    m.def("predict", [](const fs::path& checkpoint, const fs::path& features) {
        return predict(read_checkpoint(checkpoint), read_features(features));
    }, py::arg("checkpoint"), py::arg("features"), "Per-task head outputs (regression in label units).");
    m.def("report", [](const std::vector<std::string>& metrics_json, std::vector<std::string> models, std::vector<std::string> tasks) {
        std::vector<MetricsReport> reports;
        for (const auto& j : metrics_json) reports.push_back(MetricsReport::from_json(j));
        const auto t = report(reports, std::move(models), std::move(tasks));
        return py::make_tuple(t.markdown, t.csv);
    }, py::arg("metrics_json"), py::arg("models") = std::vector<std::string>{}, py::arg("tasks") = std::vector<std::string>{},
       "(markdown, csv) tables from metrics JSON texts.");
    m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); }, py::arg("x"), py::arg("y"));
    m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); }, py::arg("x"), py::arg("y"));
}
