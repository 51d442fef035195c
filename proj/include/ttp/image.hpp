#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ttp {

/// Planar float image, values nominally in [0, 1].
struct Image {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
        : channels(c), height(h), width(w), values(c * h * w, fill) {}

    double& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
    bool operator==(const Image&) const = default;
};

/// Binary change mask, one byte per pixel holding 0 or 1.
struct Mask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;

    Mask() = default;
    Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), values(h * w, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : values) n += v;
        return n;
    }
    bool operator==(const Mask&) const = default;
};

}  // namespace ttp
