#include "ssgan/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ssgan/rng.hpp"

namespace ssgan::data {

namespace {

uint32_t read_be32(std::istream& is, const char* what) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (!is) throw Error(std::string("idx: truncated file while reading ") + what);
  return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) |
         uint32_t(buf[3]);
}

void write_be32(std::ostream& os, uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(buf), 4);
}

constexpr uint32_t kIdxImagesMagic = 0x00000803;

}  // namespace

Dataset load_idx(const std::string& path, int64_t target_resolution, DType dt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("idx: cannot open " + path);
  const uint32_t magic = read_be32(f, "magic");
  if (magic != kIdxImagesMagic) {
    throw Error("idx: bad magic in " + path + " (expected u8 3-d image file)");
  }
  const uint32_t n = read_be32(f, "count");
  const uint32_t h = read_be32(f, "height");
  const uint32_t w = read_be32(f, "width");
  if (n == 0) throw Error("idx: empty dataset in " + path);
  if (h == 0 || w == 0 || h > 4096 || w > 4096 ||
      static_cast<uint64_t>(n) * h * w > (1ull << 33)) {
    throw Error("idx: unreasonable extents " + std::to_string(n) + "x" + std::to_string(h) +
                "x" + std::to_string(w));
  }
  std::vector<unsigned char> raw(static_cast<size_t>(n) * h * w);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw Error("idx: truncated pixel data in " + path);

  Tensor images = Tensor::empty({n, 1, h, w}, dt);
  for (size_t i = 0; i < raw.size(); ++i) {
    images.set(static_cast<int64_t>(i), static_cast<double>(raw[i]) / 127.5 - 1.0);
  }
  Dataset ds;
  ds.name = path;
  ds.original_resolution = h;
  if (target_resolution > 0 && target_resolution != static_cast<int64_t>(h)) {
    images = nearest_resize(images, target_resolution);
    ds.resize_policy = "nearest";
  }
  ds.images = std::move(images);
  return ds;
}

void save_idx(const std::string& path, const Tensor& images) {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != 1) {
    throw Error("save_idx: expected [N,1,H,W] grayscale, got " + shape_str(s));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("save_idx: cannot open " + path);
  write_be32(f, kIdxImagesMagic);
  write_be32(f, static_cast<uint32_t>(s[0]));
  write_be32(f, static_cast<uint32_t>(s[2]));
  write_be32(f, static_cast<uint32_t>(s[3]));
  for (int64_t i = 0; i < images.numel(); ++i) {
    const double q = std::round(255.0 * (images.at(i) + 1.0) / 2.0);
    const double c = std::min(255.0, std::max(0.0, q));
    const unsigned char b = static_cast<unsigned char>(c);
    f.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!f) throw Error("save_idx: write failed for " + path);
}

Tensor nearest_resize(const Tensor& images, int64_t target) {
  const auto& s = images.shape();
  if (s.size() != 4) throw Error("nearest_resize: expected [N,C,H,W], got " + shape_str(s));
  if (target <= 0) throw Error("nearest_resize: non-positive target");
  const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (h == target && w == target) return images;
  Tensor out = Tensor::empty({n, c, target, target}, images.dtype());
  for (int64_t i = 0; i < n * c; ++i) {
    for (int64_t y = 0; y < target; ++y) {
      const int64_t sy = std::min(h - 1, y * h / target);
      for (int64_t x = 0; x < target; ++x) {
        const int64_t sx = std::min(w - 1, x * w / target);
        out.set((i * target + y) * target + x, images.at((i * h + sy) * w + sx));
      }
    }
  }
  return out;
}

std::pair<std::pair<double, double>, std::pair<double, double>> gaussian_centers(
    int64_t resolution) {
  const double r = static_cast<double>(resolution);
  return {{0.3 * r, 0.3 * r}, {0.7 * r, 0.7 * r}};
}

Dataset synthetic_dataset(const std::string& kind, int64_t n, int64_t resolution, uint64_t seed,
                          DType dt) {
  if (n < 1) throw Error("synthetic_dataset: need at least one sample");
  if (resolution < 4) throw Error("synthetic_dataset: resolution below 4");
  Rng rng = substream(seed, "synthetic/" + kind);
  Tensor images = Tensor::full({n, 1, resolution, resolution}, -1.0, dt);
  const int64_t hw = resolution * resolution;

  if (kind == "gaussians") {
    const auto centers = gaussian_centers(resolution);
    const double sigma = static_cast<double>(resolution) / 8.0;
    for (int64_t i = 0; i < n; ++i) {
      const bool first = rng.uniform() < 0.5;
      const double cy = (first ? centers.first.first : centers.second.first) +
                        rng.uniform(-0.45, 0.45);
      const double cx = (first ? centers.first.second : centers.second.second) +
                        rng.uniform(-0.45, 0.45);
      for (int64_t y = 0; y < resolution; ++y) {
        for (int64_t x = 0; x < resolution; ++x) {
          const double dy = static_cast<double>(y) - cy;
          const double dx = static_cast<double>(x) - cx;
          const double v = -1.0 + 2.0 * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
          images.set(i * hw + y * resolution + x, v);
        }
      }
    }
  } else if (kind == "stripes") {
    for (int64_t i = 0; i < n; ++i) {
      const int64_t phase = static_cast<int64_t>(rng.below(4));
      for (int64_t y = 0; y < resolution; ++y) {
        const double v = ((y + phase) % 4) < 2 ? 1.0 : -1.0;
        for (int64_t x = 0; x < resolution; ++x) {
          images.set(i * hw + y * resolution + x, v);
        }
      }
    }
  } else if (kind == "checker") {
    for (int64_t i = 0; i < n; ++i) {
      const double polarity = rng.uniform() < 0.5 ? 1.0 : -1.0;
      for (int64_t y = 0; y < resolution; ++y) {
        for (int64_t x = 0; x < resolution; ++x) {
          const double v = ((y + x) % 2 == 0) ? polarity : -polarity;
          images.set(i * hw + y * resolution + x, v);
        }
      }
    }
  } else {
    throw Error("synthetic_dataset: unknown kind '" + kind +
                "' (gaussians|stripes|checker)");
  }
  Dataset ds;
  ds.images = std::move(images);
  ds.name = "synthetic:" + kind;
  ds.original_resolution = resolution;
  return ds;
}

}  // namespace ssgan::data
