#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace slidebench {

/// 8-bit row-major image with interleaved channels (1 = gray, 3 = RGB).
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> data;

    Raster() = default;
    Raster(int w, int h, int c, std::uint8_t fill = 0);

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    std::uint8_t at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
    std::uint8_t& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    bool valid() const;

    /// Copy of the sub-rectangle [x, x+w) x [y, y+h); must lie inside.
    Raster crop(int x, int y, int w, int h) const;

    bool operator==(const Raster&) const = default;
};

/// Area-averaging downscale. Output is floor(dim * scale) per axis (at least 1);
/// every output pixel is the exact area-weighted mean of the input footprint
/// [i/scale, (i+1)/scale), rounded half up. scale == 1 returns a copy.
Raster resample_area(const Raster& raster, double scale);

/// Same kernel with an explicit output size; footprints still have width 1/scale.
Raster resample_area_to(const Raster& raster, double scale, int out_width, int out_height);

/// floor(dim * scale) with a tolerance for representational error, clamped to >= 1.
int scaled_dim(int dim, double scale);

}  // namespace slidebench
