#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <thread>

#include "h5_fixtures.hpp"
#include "oracles.hpp"
#include "slidebench/embedder.hpp"
#include "slidebench/png_io.hpp"
#include "slidebench/error.hpp"
#include "slidebench/slide_io.hpp"
#include "slidebench/tiler.hpp"
#include "support.hpp"

using namespace slidebench;

namespace {

Raster checker_tile() {
    Raster t(224, 224, 3);
    for (int y = 0; y < 224; ++y) {
        for (int x = 0; x < 224; ++x) {
            const bool pink = ((x / 28) + (y / 28)) % 2 == 0;
            t.at(x, y, 0) = pink ? 200 : 245;
            t.at(x, y, 1) = pink ? 120 : 245;
            t.at(x, y, 2) = pink ? 150 : 245;
        }
    }
    return t;
}

// Bit patterns of native_embed(checker_tile(), seed 42, D 128).
const std::uint32_t kGolden[128] = {
#include "golden_checker.inc"
};

// Two cropped slides under `root`, one of them the 16-tile square.
void build_dataset(const std::filesystem::path& root, const std::filesystem::path& scratch) {
    SynthSpec s;
    s.width = 1536;
    s.height = 1536;
    s.mpp = 0.5;
    s.seed = 5;
    s.levels = 2;
    s.blobs = {{448, 448, 448, 448, BlobShape::Rect}};
    synth_slide(s, scratch / "sq.tiff");
    s.seed = 6;
    s.blobs = {{800, 700, 500, 400, BlobShape::Ellipse}};
    synth_slide(s, scratch / "el.tiff");
    TilePlan plan;
    crop_slide_file(scratch / "sq.tiff", plan, root);
    crop_slide_file(scratch / "el.tiff", plan, root);
}

void set_mode(const char* mode) { ::setenv("FAKE_ADAPTER_MODE", mode, 1); }

}  // namespace

TEST_SUITE("embedder") {

TEST_CASE("native embed matches the straight-line reference and the frozen golden") {
    const Raster tile = checker_tile();
    EmbedderSpec spec;
    spec.seed = 42;
    spec.dim = 128;
    const auto v = native_embed(tile, spec);
    REQUIRE(v.size() == 128);
    const auto ref = oracle::native_embed(tile, 128, 42);
    CHECK(std::memcmp(v.data(), ref.data(), 128 * sizeof(float)) == 0);
    for (int i = 0; i < 128; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &v[static_cast<std::size_t>(i)], 4);
        CHECK(bits == kGolden[i]);
    }
}

TEST_CASE("native embed is deterministic and unit-norm, zero for black") {
    CounterRng rng(51);
    EmbedderSpec spec;
    spec.dim = 64;
    spec.seed = 3;
    for (int i = 0; i < 10; ++i) {
        const Raster t = testing::random_raster(64, 64, 3, rng);
        const auto a = native_embed(t, spec);
        const auto b = native_embed(t, spec);
        CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
        double ss = 0;
        for (float f : a) ss += static_cast<double>(f) * f;
        CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-6);
        const auto ref = oracle::native_embed(t, 64, 3);
        CHECK(std::memcmp(a.data(), ref.data(), a.size() * sizeof(float)) == 0);
    }
    const auto z = native_embed(Raster(32, 32, 3, 0), spec);
    for (float f : z) CHECK(f == 0.0f);
    CHECK_THROWS_AS(native_embed(Raster(32, 16, 3, 1), spec), Error);
    CHECK(spec.resolved_id() == "native8x8-s3-d64");
}

TEST_CASE("embed_dataset writes manifest-ordered bags and is idempotent") {
    testing::TempDir dir("emb");
    const auto root = dir / "ds";
    build_dataset(root, dir.path());
    EmbedderSpec spec;
    spec.dim = 32;
    EmbedOptions opt;
    opt.batch = 3;
    opt.workers = 4;
    const auto summary = embed_dataset(root, spec, opt);
    CHECK(summary.written == std::vector<std::string>{"el", "sq"});

    const FeatureBag bag = read_features(root / "sq" / "sq.h5");
    const auto manifest = read_manifest(root / "sq" / "tile_manifest.jsonl");
    REQUIRE(bag.rows == 16);
    CHECK(bag.dim == 32);
    CHECK(bag.mpp == 0.5);
    CHECK(bag.tile_size == 224);
    CHECK(bag.embedder_id == spec.resolved_id());
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        CHECK(bag.coords[2 * i] == manifest[i].x);
        CHECK(bag.coords[2 * i + 1] == manifest[i].y);
        const auto v = native_embed(read_png(root / "sq" / manifest[i].path), spec);
        CHECK(std::memcmp(v.data(), bag.row(static_cast<std::int64_t>(i)), 32 * sizeof(float)) == 0);
    }

    const auto before = std::filesystem::last_write_time(root / "sq" / "sq.h5");
    const auto bytes = testing::slurp(root / "sq" / "sq.h5");
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    const auto again = embed_dataset(root, spec, opt);
    CHECK(again.written.empty());
    CHECK(again.skipped_existing.size() == 2);
    CHECK(std::filesystem::last_write_time(root / "sq" / "sq.h5") == before);

    opt.force = true;
    opt.workers = 1;
    opt.batch = 64;
    embed_dataset(root, spec, opt);
    CHECK(testing::slurp(root / "sq" / "sq.h5") == bytes);
    CHECK(validate_features(root).all_ok());
}

TEST_CASE("zero-tile slides get no feature file; missing tiles are an error") {
    testing::TempDir dir("emb0");
    const auto root = dir / "ds";
    std::filesystem::create_directories(root / "empty" / "tiles");
    write_text_file(root / "empty" / "tile_manifest.jsonl", "");
    auto summary = embed_dataset(root, EmbedderSpec{});
    CHECK(summary.empty == std::vector<std::string>{"empty"});
    CHECK_FALSE(std::filesystem::exists(root / "empty" / "empty.h5"));
    CHECK(validate_features(root).all_ok());

    std::filesystem::create_directories(root / "gone" / "tiles");
    write_text_file(root / "gone" / "tile_manifest.jsonl",
                    manifest_line({0, 0, 224, 224, 1.0, 20.0, "tiles/0_0.png"}) + "\n");
    try {
        embed_dataset(root, EmbedderSpec{});
        FAIL("expected MissingTiles");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingTiles);
    }
}

TEST_CASE("validate_features names dtype, coords and missing-file failures") {
    testing::TempDir dir("val");
    const auto root = dir / "ds";
    build_dataset(root, dir.path());
    embed_dataset(root, EmbedderSpec{});
    CHECK(validate_features(root).all_ok());

    h5fix::Parts p;
    p.n = 16;
    p.features_f64 = true;
    h5fix::write(root / "sq" / "sq.h5", p);
    auto report = validate_features(root);
    CHECK_FALSE(report.all_ok());
    CHECK(report.failures() == 1);
    REQUIRE(report.slides.size() == 2);
    CHECK(report.slides[1].slide_id == "sq");
    REQUIRE_FALSE(report.slides[1].reasons.empty());
    CHECK(report.slides[1].reasons[0].rfind("dtype", 0) == 0);
    CHECK(report.to_text().find("FAIL sq") != std::string::npos);

    // Valid file whose coords disagree with the manifest.
    FeatureBag bag = read_features(root / "el" / "el.h5");
    bag.coords[0] += 1;
    write_features(root / "el" / "el.h5", bag);
    report = validate_features(root);
    CHECK(report.slides[0].reasons[0].rfind("coords", 0) == 0);

    std::filesystem::remove(root / "el" / "el.h5");
    report = validate_features(root);
    CHECK_FALSE(report.slides[0].ok);
}

TEST_CASE("external adapter handoff: conforming output is kept") {
    testing::TempDir dir("ext");
    const auto root = dir / "ds";
    build_dataset(root, dir.path());
    EmbedderSpec spec;
    spec.kind = EmbedderKind::External;
    spec.dim = 24;
    spec.embedder_id = "fake-adapter";
    EmbedOptions opt;
    opt.adapter_cmd = FAKE_ADAPTER;
    set_mode("ok");
    const auto summary = embed_dataset(root, spec, opt);
    CHECK(summary.written.size() == 2);
    CHECK(summary.rejected.empty());
    const FeatureBag bag = read_features(root / "sq" / "sq.h5");
    CHECK(bag.embedder_id == "fake-adapter");
    CHECK(bag.dim == 24);
    CHECK(validate_features(root).all_ok());
}

TEST_CASE("external adapter handoff: nonconforming output is deleted") {
    testing::TempDir dir("extbad");
    const auto root = dir / "ds";
    build_dataset(root, dir.path());
    EmbedderSpec spec;
    spec.kind = EmbedderKind::External;
    spec.embedder_id = "fake-adapter";
    EmbedOptions opt;
    opt.adapter_cmd = FAKE_ADAPTER;
    for (const char* mode : {"f64", "coords", "fail", "noop"}) {
        set_mode(mode);
        opt.force = true;
        const auto summary = embed_dataset(root, spec, opt);
        CHECK(summary.rejected.size() == 2);
        CHECK_FALSE(std::filesystem::exists(root / "sq" / "sq.h5"));
        CHECK_FALSE(std::filesystem::exists(root / "el" / "el.h5"));
    }
    set_mode("ok");
}

}  // TEST_SUITE
