#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reshape/error.hpp"

namespace reshape::image {

/// Interleaved, row-major raster.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c = 1, T fill = T{})
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {
        if (w < 0 || h < 0 || c <= 0) throw ValueError("invalid image dimensions");
    }

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
    bool same_size(const Image& o) const { return width == o.width && height == o.height; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }

    bool operator==(const Image&) const = default;
};

using Image8 = Image<std::uint8_t>;
using Image16 = Image<std::uint16_t>;

/// Single-channel binary mask; any non-zero value is occupied.
using Mask = Image<std::uint8_t>;

inline std::string describe(int w, int h, int c) {
    return std::to_string(w) + "x" + std::to_string(h) + "x" + std::to_string(c);
}

}  // namespace reshape::image
