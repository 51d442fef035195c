#include "ttp/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ttp {

Raster8 read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw ImageIoError("cannot read " + path.string() + ": " + image.message);
    }
    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Raster8 r;
    r.channels = gray ? 1 : 3;
    r.height = image.height;
    r.width = image.width;
    r.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, r.pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw ImageIoError("cannot decode " + path.string() + ": " + msg);
    }
    return r;
}

void write_png(const std::filesystem::path& path, const Raster8& raster) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(raster.width);
    image.height = static_cast<png_uint_32>(raster.height);
    image.format = raster.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, raster.pixels.data(), 0, nullptr)) {
        throw ImageIoError("cannot write " + path.string() + ": " + image.message);
    }
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

Image read_rgb(const std::filesystem::path& path) {
    const Raster8 r = read_png(path);
    Image img(3, r.height, r.width);
    for (std::size_t y = 0; y < r.height; ++y) {
        for (std::size_t x = 0; x < r.width; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                const std::size_t src = (y * r.width + x) * r.channels + (r.channels == 1 ? 0 : c);
                img.at(c, y, x) = r.pixels[src] / 255.0;
            }
        }
    }
    return img;
}

void write_rgb(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 3) throw ImageIoError("write_rgb needs a 3-channel image");
    Raster8 r{3, image.height, image.width, std::vector<std::uint8_t>(3 * image.height * image.width)};
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            for (std::size_t c = 0; c < 3; ++c) r.pixels[(y * image.width + x) * 3 + c] = to_byte(image.at(c, y, x));
        }
    }
    write_png(path, r);
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
    Raster8 r{1, mask.height, mask.width, std::vector<std::uint8_t>(mask.values.size())};
    for (std::size_t i = 0; i < mask.values.size(); ++i) r.pixels[i] = mask.values[i] ? 255 : 0;
    write_png(path, r);
}

void write_gray(const std::filesystem::path& path, std::size_t height, std::size_t width,
                const std::vector<double>& values) {
    Raster8 r{1, height, width, std::vector<std::uint8_t>(height * width)};
    for (std::size_t i = 0; i < r.pixels.size(); ++i) r.pixels[i] = to_byte(values[i]);
    write_png(path, r);
}

}  // namespace ttp
