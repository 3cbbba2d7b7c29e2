#pragma once

#include <string>

#include "ssgan/tensor.hpp"

namespace ssgan::data {

struct Dataset {
  Tensor images;  // [N, C, H, W] scaled to [-1, 1]
  std::string name;
  int64_t original_resolution = 0;
  std::string resize_policy = "none";
};

// IDX container of unsigned-byte images (magic 0x00000803, big-endian
// extents). Pixels map v -> v/127.5 - 1. A non-zero target resolution
// applies nearest-neighbor resizing.
Dataset load_idx(const std::string& path, int64_t target_resolution, DType dt);
// Quantizes with round(255*(v+1)/2) and writes the same layout.
void save_idx(const std::string& path, const Tensor& images);

Tensor nearest_resize(const Tensor& images, int64_t target);

// kinds: gaussians (blobs at two fixed centers with sub-pixel jitter),
// stripes (period-4 bands, random phase), checker (1px board, random
// polarity).
Dataset synthetic_dataset(const std::string& kind, int64_t n, int64_t resolution, uint64_t seed,
                          DType dt);

// Fixed blob centers of the gaussians kind, in pixels for a given
// resolution; exposed so tests can assert rendering accuracy.
std::pair<std::pair<double, double>, std::pair<double, double>> gaussian_centers(
    int64_t resolution);

}  // namespace ssgan::data
