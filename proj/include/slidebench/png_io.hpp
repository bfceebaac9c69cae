#pragma once

#include <filesystem>

#include "slidebench/raster.hpp"

namespace slidebench {

// 8-bit gray or RGB PNG. Output carries no timestamp chunks, so identical
// rasters always produce identical files.
void write_png(const std::filesystem::path& path, const Raster& raster);
Raster read_png(const std::filesystem::path& path);

}  // namespace slidebench
