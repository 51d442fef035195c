#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "ttp/image.hpp"

namespace ttp {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 8-bit raster as stored on disk.
struct Raster8 {
    std::size_t channels = 0;  // 1 or 3
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // interleaved
};

Raster8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster8& raster);

/// RGB (gray is replicated) scaled to [0, 1].
Image read_rgb(const std::filesystem::path& path);
/// Rounds to 8 bits after clamping to [0, 1].
void write_rgb(const std::filesystem::path& path, const Image& image);
/// Writes 0/255 single-channel PNG.
void write_mask(const std::filesystem::path& path, const Mask& mask);
/// Grayscale of `values` in [0, 1], row-major height x width.
void write_gray(const std::filesystem::path& path, std::size_t height, std::size_t width,
                const std::vector<double>& values);

std::uint8_t to_byte(double v);

}  // namespace ttp
