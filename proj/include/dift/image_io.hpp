// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dift {

/// Interleaved 8-bit RGB raster, row-major from the top row.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}
    std::uint8_t *at(int col, int row) { return pixels.data() + (static_cast<std::size_t>(row) * width + col) * 3; }
    const std::uint8_t *at(int col, int row) const
    {
        return pixels.data() + (static_cast<std::size_t>(row) * width + col) * 3;
    }
};

/// Lossless PNG with fixed encoder settings and no timestamp chunk, so equal
/// images give equal files.
void write_png(const std::filesystem::path &path, const RgbImage &image);
RgbImage read_png(const std::filesystem::path &path);

} // namespace dift
