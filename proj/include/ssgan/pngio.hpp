#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssgan/tensor.hpp"

namespace ssgan::png {

// Minimal 8-bit PNG writer (grayscale or RGB), zlib-compressed.
void write_png(const std::string& path, int64_t width, int64_t height, int64_t channels,
               const std::vector<uint8_t>& pixels);

// Tiles images [N,C,H,W] in [-1,1] into a grid (row-major, `cols` per row)
// and writes an 8-bit PNG. Pixel mapping: round(255*(v+1)/2).
void write_sample_grid(const std::string& path, const Tensor& images, int64_t cols);

}  // namespace ssgan::png
