#include "slidebench/png_io.hpp"

#include <png.h>

#include <cstring>

#include "slidebench/error.hpp"

namespace slidebench {

void write_png(const std::filesystem::path& path, const Raster& raster) {
    if (!raster.valid() || raster.width < 1 || raster.height < 1) {
        fail(ErrorCode::InvalidArgument, "cannot encode empty or malformed raster");
    }
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(raster.width);
    image.height = static_cast<png_uint_32>(raster.height);
    image.format = raster.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, raster.data.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::IoError, "writing " + path.string() + ": " + msg);
    }
}

Raster read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        fail(ErrorCode::IoError, "reading " + path.string() + ": " + image.message);
    }
    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Raster out(static_cast<int>(image.width), static_cast<int>(image.height), gray ? 1 : 3);
    if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::IoError, "decoding " + path.string() + ": " + msg);
    }
    return out;
}

}  // namespace slidebench
