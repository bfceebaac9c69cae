#include "slidebench/tissue_mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slidebench/error.hpp"
#include "slidebench/png_io.hpp"
#include "slidebench/slide_io.hpp"

namespace slidebench {

Raster saturation_channel(const Raster& rgb) {
    if (rgb.channels != 3) fail(ErrorCode::InvalidArgument, "saturation needs an RGB raster");
    Raster out(rgb.width, rgb.height, 1);
    for (std::size_t i = 0; i < rgb.pixel_count(); ++i) {
        const int r = rgb.data[3 * i], g = rgb.data[3 * i + 1], b = rgb.data[3 * i + 2];
        const int mx = std::max({r, g, b}), mn = std::min({r, g, b});
        // round-half-up of 255 * (mx - mn) / mx in integers
        out.data[i] = mx == 0 ? 0 : static_cast<std::uint8_t>((2 * 255 * (mx - mn) + mx) / (2 * mx));
    }
    return out;
}

Histogram histogram(const Raster& gray) {
    if (gray.channels != 1) fail(ErrorCode::InvalidArgument, "histogram needs a single-channel raster");
    Histogram h{};
    for (auto v : gray.data) ++h[v];
    return h;
}

OtsuResult otsu_threshold(const Histogram& hist) {
    std::uint64_t total = 0;
    int nonzero = 0, last_nonzero = 0;
    for (int i = 0; i < 256; ++i) {
        total += hist[static_cast<std::size_t>(i)];
        if (hist[static_cast<std::size_t>(i)] > 0) {
            ++nonzero;
            last_nonzero = i;
        }
    }
    if (total == 0) fail(ErrorCode::InvalidArgument, "otsu on an empty histogram");
    if (nonzero == 1) return {last_nonzero, true};

    const double n = static_cast<double>(total);
    std::array<double, 256> p{};
    double mean_total = 0.0;
    for (int i = 0; i < 256; ++i) {
        p[static_cast<std::size_t>(i)] = static_cast<double>(hist[static_cast<std::size_t>(i)]) / n;
        mean_total += i * p[static_cast<std::size_t>(i)];
    }

    // Prefix form: sigma_b^2 = (mu_T * w0 - mu(t))^2 / (w0 * w1)
    double w0 = 0.0, mu = 0.0, best = -1.0;
    int best_t = 0;
    for (int t = 0; t < 256; ++t) {
        w0 += p[static_cast<std::size_t>(t)];
        mu += t * p[static_cast<std::size_t>(t)];
        const double w1 = 1.0 - w0;
        double sigma = 0.0;
        if (w0 > 0.0 && w1 > 1e-15) {
            const double d = mean_total * w0 - mu;
            sigma = d * d / (w0 * w1);
        }
        if (sigma > best * (1.0 + 1e-12) && sigma > best) {
            best = sigma;
            best_t = t;
        }
    }
    return {best_t, false};
}

namespace {

Raster majority_smooth(const Raster& mask) {
    Raster out = mask;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            const auto v = mask.at(x, y);
            int disagree = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
                    disagree += mask.at(nx, ny) != v;
                }
            }
            if (disagree >= 5) out.at(x, y) = static_cast<std::uint8_t>(1 - v);
        }
    }
    return out;
}

}  // namespace

TissueMask binary_mask(const Raster& thumb_rgb) {
    const Raster sat = saturation_channel(thumb_rgb);
    TissueMask result;
    result.mask = Raster(sat.width, sat.height, 1, 0);
    if (sat.pixel_count() == 0) return result;
    const OtsuResult otsu = otsu_threshold(histogram(sat));
    result.threshold = otsu.threshold;
    result.degenerate = otsu.degenerate;
    if (otsu.degenerate) return result;
    for (std::size_t i = 0; i < sat.data.size(); ++i) result.mask.data[i] = sat.data[i] > otsu.threshold ? 1 : 0;
    result.mask = majority_smooth(result.mask);
    return result;
}

namespace {

struct DisjointSet {
    std::vector<int> parent;

    int make() {
        parent.push_back(static_cast<int>(parent.size()));
        return parent.back();
    }
    int find(int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent[static_cast<std::size_t>(b)] = a;
    }
};

struct Labelling {
    std::vector<int> labels;  // per pixel, final label or 0
    std::vector<Region> regions;
};

// Two-pass union-find over the 8-neighbourhood.
Labelling label_impl(const Raster& mask, std::int64_t min_region_area) {
    if (mask.channels != 1) fail(ErrorCode::InvalidArgument, "label_components needs a single-channel mask");
    const int w = mask.width, h = mask.height;
    std::vector<int> provisional(mask.pixel_count(), -1);
    DisjointSet sets;
    auto at = [&](int x, int y) -> int& { return provisional[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            int current = -1;
            const int nbr[4][2] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0}};
            for (const auto& d : nbr) {
                const int nx = x + d[0], ny = y + d[1];
                if (nx < 0 || ny < 0 || nx >= w) continue;
                const int l = at(nx, ny);
                if (l < 0) continue;
                if (current < 0) current = l;
                else sets.unite(current, l);
            }
            at(x, y) = current < 0 ? sets.make() : current;
        }
    }

    // Root -> component statistics, in order of first appearance in the scan.
    std::vector<int> root_slot(sets.parent.size(), -1);
    std::vector<Region> comps;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int& l = at(x, y);
            if (l < 0) continue;
            const int root = sets.find(l);
            int& slot = root_slot[static_cast<std::size_t>(root)];
            if (slot < 0) {
                slot = static_cast<int>(comps.size());
                comps.push_back({0, x, y, x + 1, y + 1, 0});
            }
            Region& r = comps[static_cast<std::size_t>(slot)];
            r.x0 = std::min(r.x0, x);
            r.x1 = std::max(r.x1, x + 1);
            r.y1 = std::max(r.y1, y + 1);
            ++r.area;
            l = slot;
        }
    }

    std::vector<int> final_label(comps.size(), 0);
    Labelling out;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        if (comps[i].area < min_region_area) continue;
        comps[i].label = static_cast<int>(out.regions.size()) + 1;
        final_label[i] = comps[i].label;
        out.regions.push_back(comps[i]);
    }
    out.labels.assign(provisional.size(), 0);
    for (std::size_t i = 0; i < provisional.size(); ++i) {
        if (provisional[i] >= 0) out.labels[i] = final_label[static_cast<std::size_t>(provisional[i])];
    }
    return out;
}

}  // namespace

std::vector<Region> label_components(const Raster& mask, std::int64_t min_region_area) {
    return label_impl(mask, min_region_area).regions;
}

std::vector<int> label_image(const Raster& mask, std::int64_t min_region_area) {
    return label_impl(mask, min_region_area).labels;
}

TissueMask compute_tissue_mask(const SlideSource& slide, const MaskOptions& options, Raster* thumb_out) {
    const double mpp = std::max(options.thumbnail_mpp, slide.level0_mpp());
    Thumbnail thumb = thumbnail(slide, mpp);
    TissueMask result = binary_mask(thumb.raster);
    result.scale_to_level0 = thumb.scale_to_level0;
    result.regions = label_components(result.mask, options.min_region_area);
    if (thumb_out) *thumb_out = std::move(thumb.raster);
    return result;
}

void write_qc_overlay(const std::filesystem::path& path, const Raster& thumb_rgb, const TissueMask& mask) {
    Raster out = thumb_rgb;
    const Raster& m = mask.mask;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(x, y)) continue;
            const bool edge = x == 0 || y == 0 || x == m.width - 1 || y == m.height - 1 || !m.at(x - 1, y) ||
                              !m.at(x + 1, y) || !m.at(x, y - 1) || !m.at(x, y + 1);
            if (edge) {
                out.at(x, y, 0) = 0;
                out.at(x, y, 1) = 255;
                out.at(x, y, 2) = 0;
            }
        }
    }
    write_png(path, out);
}

}  // namespace slidebench
