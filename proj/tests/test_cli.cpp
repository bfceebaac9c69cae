#include <doctest.h>

#include <nlohmann/json.hpp>

#include "cli_run.hpp"
#include "slidebench/dataset_store.hpp"
#include "slidebench/tiler.hpp"
#include "support.hpp"

using testing::q;
using testing::run_tool;

namespace fs = std::filesystem;

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2") {
    CHECK(run_tool("").status == 2);
    CHECK(run_tool("frobnicate").status == 2);
    const auto r = run_tool("crop --slide x.tiff");
    CHECK(r.status == 2);
    CHECK(r.output.find("--out") != std::string::npos);
    CHECK(run_tool("train /tmp/x --out /tmp/y --model Transformer").status == 2);
    CHECK(run_tool("synth --out /tmp/x.tiff --rect 1,2,3").status == 2);
}

TEST_CASE("help and version exit 0") {
    const auto h = run_tool("crop --help");
    CHECK(h.status == 0);
    CHECK(h.output.find("--min-coverage") != std::string::npos);
    CHECK(h.output.find("0.5") != std::string::npos);
    const auto v = run_tool("--version");
    CHECK(v.status == 0);
    CHECK(v.output.find(SLIDEBENCH_VERSION) != std::string::npos);
}

TEST_CASE("data errors exit 1") {
    testing::TempDir dir("cli_err");
    const auto r = run_tool("crop --slide " + q((dir / "missing.tiff").string()) + " --out " + q((dir / "ds").string()));
    CHECK(r.status == 1);
    CHECK(run_tool("split " + q(dir.path().string())).status == 1);
}

TEST_CASE("synth, crop, validate") {
    testing::TempDir dir("cli_crop");
    const auto slide = (dir / "s.tiff").string();
    const auto ds = (dir / "ds").string();
    REQUIRE(run_tool("synth --out " + q(slide) + " --width 1024 --height 1024 --rect 0,0,448,448 --seed 3").status == 0);
    CHECK(fs::exists(dir / "s.run_config.json"));

    const auto crop = run_tool("crop --slide " + q(slide) + " --out " + q(ds) + " --mpp 0.5 --tile 224");
    REQUIRE(crop.status == 0);
    CHECK(crop.output.find("min_coverage") != std::string::npos);
    const auto manifest = fs::path(ds) / "s" / "tile_manifest.jsonl";
    REQUIRE(fs::exists(manifest));
    const auto records = slidebench::read_manifest(manifest);
    CHECK(records.size() == 4);
    for (const auto& r : records) CHECK(fs::exists(fs::path(ds) / "s" / r.path));
    CHECK(fs::exists(fs::path(ds) / "s" / "run_config.json"));

    SUBCASE("idempotent without --force") {
        const auto before = testing::tree_digest(fs::path(ds) / "s");
        const auto again = run_tool("crop --slide " + q(slide) + " --out " + q(ds) + " --mpp 0.5 --tile 224");
        CHECK(again.status == 0);
        CHECK(testing::tree_digest(fs::path(ds) / "s") == before);
        const auto forced = run_tool("crop --slide " + q(slide) + " --out " + q(ds) + " --mpp 0.5 --tile 224 --force");
        CHECK(forced.status == 0);
        CHECK(testing::tree_digest(fs::path(ds) / "s") == before);
    }

    SUBCASE("validate catches a tampered feature file") {
        REQUIRE(run_tool("embed " + q(ds) + " --dim 16").status == 0);
        const auto ok = run_tool("validate " + q(ds));
        CHECK(ok.status == 0);
        CHECK(ok.output.find("PASS s") != std::string::npos);
        auto bag = slidebench::read_features(fs::path(ds) / "s" / "s.h5");
        bag.coords[0] += 1;
        slidebench::write_features(fs::path(ds) / "s" / "s.h5", bag);
        const auto bad = run_tool("validate " + q(ds));
        CHECK(bad.status == 1);
        CHECK(bad.output.find("FAIL s") != std::string::npos);
        CHECK(bad.output.find("coords") != std::string::npos);
    }
}

TEST_CASE("cohort chain writes bench tables") {
    testing::TempDir dir("cli_chain");
    const auto root = dir.path().string();
    REQUIRE(run_tool("synth --out " + q(root + "/slides") + " --dataset " + q(root + "/ds") +
                     " --cohort 6 --width 1024 --height 1024 --seed 5").status == 0);
    REQUIRE(run_tool("crop --slides-dir " + q(root + "/slides") + " --out " + q(root + "/ds") + " --mpp 1.0 --tile 112").status == 0);
    REQUIRE(run_tool("embed " + q(root + "/ds") + " --dim 8").status == 0);
    REQUIRE(run_tool("split " + q(root + "/ds") + " --seed 1").status == 0);
    CHECK(run_tool("split " + q(root + "/ds") + " --seed 2").status == 0);
    REQUIRE(run_tool("train " + q(root + "/ds") + " --out " + q(root + "/run") + " --model SlideAve --epochs 3 --no-timestamps").status == 0);
    CHECK(fs::exists(fs::path(root) / "run" / "checkpoint.bin"));
    CHECK(fs::exists(fs::path(root) / "run" / "train_log.jsonl"));
    CHECK(fs::exists(fs::path(root) / "run" / "run_config.json"));
    const auto ev = run_tool("eval " + q(root + "/ds") + " --checkpoint " + q(root + "/run/checkpoint.bin") + " --out " + q(root + "/eval"));
    REQUIRE(ev.status == 0);
    REQUIRE(run_tool("report --metrics " + q(root + "/eval/metrics.json") + " --out " + q(root + "/report")).status == 0);
    const auto md = testing::slurp(fs::path(root) / "report" / "bench.md");
    CHECK(md.rfind("| Task | SlideAve |", 0) == 0);
    CHECK(md.find("| grade |") != std::string::npos);
    const auto cfg = nlohmann::json::parse(testing::slurp(fs::path(root) / "run" / "run_config.json"));
    CHECK(cfg.at("subcommand") == "train");
    CHECK(cfg.contains("version"));
}

}
