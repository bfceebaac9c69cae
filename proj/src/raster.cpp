#include "slidebench/raster.hpp"

#include <algorithm>
#include <cmath>

#include "slidebench/error.hpp"

namespace slidebench {

Raster::Raster(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

bool Raster::valid() const {
    return width >= 0 && height >= 0 && (channels == 1 || channels == 3) &&
           data.size() == pixel_count() * static_cast<std::size_t>(channels);
}

Raster Raster::crop(int x, int y, int w, int h) const {
    if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > width || y + h > height) {
        fail(ErrorCode::OutOfBounds, "crop rectangle outside raster");
    }
    Raster out(w, h, channels);
    const auto row_bytes = static_cast<std::size_t>(w) * static_cast<std::size_t>(channels);
    for (int r = 0; r < h; ++r) {
        std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(index(x, y + r)), row_bytes,
                    out.data.begin() + static_cast<std::ptrdiff_t>(out.index(0, r)));
    }
    return out;
}

int scaled_dim(int dim, double scale) {
    const int d = static_cast<int>(std::floor(static_cast<double>(dim) * scale + 1e-9));
    return std::max(1, d);
}

namespace {

struct Tap {
    int src;
    double weight;
};

// Footprint taps for each output index along one axis.
std::vector<std::vector<Tap>> axis_taps(int in_dim, int out_dim, double footprint) {
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out_dim));
    for (int i = 0; i < out_dim; ++i) {
        const double lo = i * footprint;
        const double hi = (i + 1) * footprint;
        const int first = std::max(0, static_cast<int>(std::floor(lo)));
        const int last = std::min(in_dim, static_cast<int>(std::ceil(hi)));
        for (int j = first; j < last; ++j) {
            const double w = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
            if (w > 0.0) taps[static_cast<std::size_t>(i)].push_back({j, w});
        }
        // Footprint entirely past the input edge: fall back to the last pixel.
        if (taps[static_cast<std::size_t>(i)].empty()) taps[static_cast<std::size_t>(i)].push_back({in_dim - 1, 1.0});
    }
    return taps;
}

}  // namespace

Raster resample_area_to(const Raster& raster, double scale, int out_width, int out_height) {
    if (!(scale > 0.0) || scale > 1.0 + 1e-12) fail(ErrorCode::InvalidArgument, "resample scale must be in (0, 1]");
    if (out_width < 1 || out_height < 1) fail(ErrorCode::InvalidArgument, "resample output must be non-empty");
    if (raster.width < 1 || raster.height < 1) fail(ErrorCode::InvalidArgument, "resample input must be non-empty");

    double footprint = 1.0 / scale;
    if (std::abs(footprint - std::round(footprint)) < 1e-9) footprint = std::round(footprint);
    if (footprint == 1.0 && out_width == raster.width && out_height == raster.height) return raster;

    const auto xt = axis_taps(raster.width, out_width, footprint);
    const auto yt = axis_taps(raster.height, out_height, footprint);
    const int ch = raster.channels;

    // Horizontal pass keeps unnormalized weighted sums so integer factors stay exact.
    std::vector<double> rows(static_cast<std::size_t>(raster.height) * static_cast<std::size_t>(out_width) *
                             static_cast<std::size_t>(ch));
    for (int y = 0; y < raster.height; ++y) {
        for (int ox = 0; ox < out_width; ++ox) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (const auto& tap : xt[static_cast<std::size_t>(ox)]) acc += tap.weight * raster.at(tap.src, y, c);
                rows[(static_cast<std::size_t>(y) * static_cast<std::size_t>(out_width) + static_cast<std::size_t>(ox)) *
                         static_cast<std::size_t>(ch) +
                     static_cast<std::size_t>(c)] = acc;
            }
        }
    }

    Raster out(out_width, out_height, ch);
    for (int oy = 0; oy < out_height; ++oy) {
        double wy_sum = 0.0;
        for (const auto& tap : yt[static_cast<std::size_t>(oy)]) wy_sum += tap.weight;
        for (int ox = 0; ox < out_width; ++ox) {
            double wx_sum = 0.0;
            for (const auto& tap : xt[static_cast<std::size_t>(ox)]) wx_sum += tap.weight;
            const double norm = wx_sum * wy_sum;
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (const auto& tap : yt[static_cast<std::size_t>(oy)]) {
                    acc += tap.weight * rows[(static_cast<std::size_t>(tap.src) * static_cast<std::size_t>(out_width) +
                                              static_cast<std::size_t>(ox)) *
                                                 static_cast<std::size_t>(ch) +
                                             static_cast<std::size_t>(c)];
                }
                const double v = std::floor(acc / norm + 0.5);
                out.at(ox, oy, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }
        }
    }
    return out;
}

Raster resample_area(const Raster& raster, double scale) {
    if (!(scale > 0.0) || scale > 1.0 + 1e-12) fail(ErrorCode::InvalidArgument, "resample scale must be in (0, 1]");
    if (scale >= 1.0) return raster;
    return resample_area_to(raster, scale, scaled_dim(raster.width, scale), scaled_dim(raster.height, scale));
}

}  // namespace slidebench
