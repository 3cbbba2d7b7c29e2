#include "ssgan/pngio.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace ssgan::png {

namespace {

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
  std::vector<uint8_t> head;
  put_be32(head, static_cast<uint32_t>(data.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  f.write(type, 4);
  if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  std::vector<uint8_t> tail;
  put_be32(tail, static_cast<uint32_t>(crc));
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png(const std::string& path, int64_t width, int64_t height, int64_t channels,
               const std::vector<uint8_t>& pixels) {
  if (channels != 1 && channels != 3) throw Error("png: channels must be 1 or 3");
  if (static_cast<int64_t>(pixels.size()) != width * height * channels) {
    throw Error("png: pixel buffer size mismatch");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("png: cannot open " + path);
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(width));
  put_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);                                 // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);             // color type
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk(f, "IHDR", ihdr);

  // filter byte 0 per scanline
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height * (width * channels + 1)));
  for (int64_t y = 0; y < height; ++y) {
    raw.push_back(0);
    const uint8_t* row = pixels.data() + y * width * channels;
    raw.insert(raw.end(), row, row + width * channels);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) !=
      Z_OK) {
    throw Error("png: deflate failed");
  }
  compressed.resize(bound);
  write_chunk(f, "IDAT", compressed);
  write_chunk(f, "IEND", {});
  if (!f) throw Error("png: write failed for " + path);
}

void write_sample_grid(const std::string& path, const Tensor& images, int64_t cols) {
  const auto& s = images.shape();
  if (s.size() != 4) throw Error("sample grid: expected [N,C,H,W], got " + shape_str(s));
  const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (c != 1 && c != 3) throw Error("sample grid: channels must be 1 or 3");
  const int64_t rows = (n + cols - 1) / cols;
  const int64_t gw = cols * w, gh = rows * h;
  std::vector<uint8_t> pixels(static_cast<size_t>(gw * gh * c), 0);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t gy = (i / cols) * h, gx = (i % cols) * w;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        for (int64_t ch = 0; ch < c; ++ch) {
          const double v = images.at(((i * c + ch) * h + y) * w + x);
          const double q = std::round(255.0 * (v + 1.0) / 2.0);
          pixels[static_cast<size_t>(((gy + y) * gw + gx + x) * c + ch)] =
              static_cast<uint8_t>(std::min(255.0, std::max(0.0, q)));
        }
      }
    }
  }
  write_png(path, gw, gh, c, pixels);
}

}  // namespace ssgan::png
