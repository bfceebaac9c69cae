#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "oracles.hpp"
#include "slidebench/error.hpp"
#include "slidebench/png_io.hpp"
#include "slidebench/slide_io.hpp"
#include "slidebench/tissue_mask.hpp"
#include "support.hpp"

using namespace slidebench;

namespace {

Histogram random_histogram(CounterRng& rng) {
    Histogram h{};
    const int kind = static_cast<int>(rng.below(3));
    const int occupied = 2 + static_cast<int>(rng.below(40));
    for (int i = 0; i < occupied; ++i) {
        const int bin = kind == 0 ? static_cast<int>(rng.below(256)) : static_cast<int>(rng.below(32)) * 8;
        h[static_cast<std::size_t>(bin)] += 1 + rng.below(kind == 2 ? 4 : 1000);
    }
    return h;
}

Raster random_mask(CounterRng& rng, int w, int h, double density) {
    Raster m(w, h, 1);
    for (auto& v : m.data) v = rng.uniform01() < density ? 1 : 0;
    return m;
}

}  // namespace

TEST_SUITE("tissue_mask") {

TEST_CASE("saturation examples and formula oracle") {
    Raster px(3, 1, 3);
    px.data = {128, 128, 128, 255, 0, 0, 0, 0, 0};
    const Raster s = saturation_channel(px);
    CHECK(s.channels == 1);
    CHECK(s.data[0] == 0);
    CHECK(s.data[1] == 255);
    CHECK(s.data[2] == 0);

    CounterRng rng(21);
    const Raster r = testing::random_raster(64, 64, 3, rng);
    const Raster sr = saturation_channel(r);
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) CHECK(sr.at(x, y) == oracle::saturation(r.at(x, y, 0), r.at(x, y, 1), r.at(x, y, 2)));
    }
}

TEST_CASE("otsu analytic cases") {
    Histogram h{};
    h[10] = 500;
    h[200] = 500;
    auto r = otsu_threshold(h);
    CHECK(r.threshold == 10);
    CHECK_FALSE(r.degenerate);

    Histogram d{};
    d[37] = 1234;
    r = otsu_threshold(d);
    CHECK(r.threshold == 37);
    CHECK(r.degenerate);

    Histogram empty{};
    CHECK_THROWS_AS(otsu_threshold(empty), Error);
}

TEST_CASE("otsu equals exhaustive search on random histograms") {
    CounterRng rng(100);
    for (int i = 0; i < 100; ++i) {
        const Histogram h = random_histogram(rng);
        const auto [t, degenerate] = oracle::otsu(h);
        const auto r = otsu_threshold(h);
        CHECK(r.threshold == t);
        CHECK(r.degenerate == degenerate);
    }
}

TEST_CASE("otsu is invariant under scaling all counts") {
    CounterRng rng(101);
    for (int i = 0; i < 50; ++i) {
        const Histogram h = random_histogram(rng);
        Histogram scaled = h;
        const std::uint64_t k = 1 + rng.below(1000);
        for (auto& v : scaled) v *= k;
        CHECK(otsu_threshold(scaled).threshold == otsu_threshold(h).threshold);
    }
}

TEST_CASE("binary mask of a background-only thumbnail is empty") {
    SynthSpec s;
    s.width = 256;
    s.height = 256;
    s.seed = 4;
    s.levels = 1;
    s.tile_size = 128;
    const Raster px = render_synth_level0(s);
    const TissueMask m = binary_mask(px);
    for (auto v : m.mask.data) CHECK(v == 0);
}

TEST_CASE("binary mask of one saturated blob matches the blob area") {
    SynthSpec s;
    s.width = 400;
    s.height = 300;
    s.seed = 5;
    s.levels = 1;
    s.tile_size = 16;
    s.blobs = {{200, 150, 80, 60, BlobShape::Ellipse}};
    const Raster px = render_synth_level0(s);
    const TissueMask m = binary_mask(px);
    std::int64_t ones = 0;
    for (auto v : m.mask.data) ones += v;
    const double area = std::numbers::pi * 80 * 60;
    CHECK(std::abs(ones - area) / area < 0.05);
    // Before smoothing, every 1-pixel exceeds the threshold; smoothing only
    // touches pixels with at least five disagreeing neighbours.
    const Raster sat = saturation_channel(px);
    std::int64_t above = 0;
    for (auto v : sat.data) above += v > m.threshold;
    CHECK(std::abs(above - ones) < area * 0.01);
}

TEST_CASE("checkerboard survives smoothing unchanged") {
    Raster px(16, 16, 3);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            const bool pink = (x + y) % 2 == 0;
            px.at(x, y, 0) = pink ? 200 : 128;
            px.at(x, y, 1) = pink ? 120 : 128;
            px.at(x, y, 2) = pink ? 150 : 128;
        }
    }
    const TissueMask m = binary_mask(px);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) CHECK(m.mask.at(x, y) == ((x + y) % 2 == 0 ? 1 : 0));
    }
}

TEST_CASE("isolated pixels are removed by smoothing") {
    Raster px(9, 9, 3, 240);
    px.at(4, 4, 0) = 220;
    px.at(4, 4, 1) = 60;
    px.at(4, 4, 2) = 90;
    for (int y = 0; y < 9; ++y) {
        px.at(0, y, 0) = 200;
        px.at(0, y, 1) = 100;
    }
    const TissueMask m = binary_mask(px);
    CHECK(m.mask.at(4, 4) == 0);
    CHECK(m.mask.at(0, 4) == 1);
}

TEST_CASE("label components simple cases") {
    Raster zero(10, 7, 1, 0);
    CHECK(label_components(zero, 1).empty());
    Raster one(10, 7, 1, 1);
    const auto r = label_components(one, 1);
    REQUIRE(r.size() == 1);
    CHECK(r[0] == Region{1, 0, 0, 10, 7, 70});

    // Diagonal neighbours join under 8-connectivity.
    Raster diag(4, 4, 1, 0);
    diag.at(0, 0) = diag.at(1, 1) = diag.at(2, 2) = 1;
    diag.at(3, 0) = 1;
    const auto rd = label_components(diag, 1);
    REQUIRE(rd.size() == 2);
    CHECK(rd[0].area == 3);
    CHECK(rd[1] == Region{2, 3, 0, 4, 1, 1});
    CHECK(label_components(diag, 2).size() == 1);
}

TEST_CASE("label components equal the flood fill oracle") {
    CounterRng rng(200);
    for (int i = 0; i < 60; ++i) {
        const int w = 1 + static_cast<int>(rng.below(90));
        const int h = 1 + static_cast<int>(rng.below(90));
        const Raster m = random_mask(rng, w, h, rng.uniform(0.2, 0.7));
        const std::int64_t min_area = static_cast<std::int64_t>(rng.below(6));
        const auto labels = label_image(m, min_area);
        CHECK(labels == oracle::flood_fill_labels(m, min_area));

        const auto regions = label_components(m, min_area);
        std::map<int, std::int64_t> areas;
        for (int l : labels) {
            if (l > 0) ++areas[l];
        }
        REQUIRE(regions.size() == areas.size());
        for (const auto& r : regions) {
            CHECK(r.area == areas[r.label]);
            CHECK(r.area <= static_cast<std::int64_t>(r.width()) * r.height());
            CHECK(r.area >= min_area);
        }
    }
}

TEST_CASE("compute_tissue_mask on a synthetic slide and the qc overlay") {
    testing::TempDir dir("mask");
    SynthSpec s;
    s.width = 2048;
    s.height = 1024;
    s.seed = 9;
    s.levels = 3;
    s.blobs = {{512, 512, 300, 300, BlobShape::Ellipse}, {1536, 512, 192, 144, BlobShape::Rect}};
    synth_slide(s, dir / "m.tiff");
    const auto slide = SlideSource::open(dir / "m.tiff");
    Raster thumb;
    const TissueMask m = compute_tissue_mask(slide, {}, &thumb);
    CHECK(m.scale_to_level0 == 16.0);
    CHECK(m.mask.width == 128);
    REQUIRE(m.regions.size() == 2);
    CHECK(m.regions[0].label == 1);
    CHECK(m.regions[0].x0 < m.regions[1].x0);
    const Region& rect = m.regions[1];
    CHECK(rect.x0 == (1536 - 192) / 16);
    CHECK(rect.x1 == (1536 + 192) / 16);
    CHECK(rect.y0 == (512 - 144) / 16);
    CHECK(rect.y1 == (512 + 144) / 16);

    write_qc_overlay(dir / "qc.png", thumb, m);
    const Raster qc = read_png(dir / "qc.png");
    CHECK(qc.width == thumb.width);
    CHECK(qc.height == thumb.height);
}

}  // TEST_SUITE
