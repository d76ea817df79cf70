#pragma once

#include "angio/common.hpp"

#include <cstdint>

namespace angio {

/// Row-major binary occupancy grid. In memory: 0 background, 1 foreground.
/// On disk: 8-bit grayscale PNG with 0 background, 255 foreground.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    BinaryMask() = default;
    BinaryMask(int w, int h) : width(w), height(h), data(size_t(w) * h, 0) {}

    uint8_t& at(int x, int y) { return data[size_t(y) * width + x]; }
    uint8_t at(int x, int y) const { return data[size_t(y) * width + x]; }
    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    size_t foreground_count() const {
        size_t n = 0;
        for (uint8_t v : data) n += (v != 0);
        return n;
    }
};

void write_mask_png(const BinaryMask& m, const std::string& path);
BinaryMask read_mask_png(const std::string& path);

} // namespace angio
