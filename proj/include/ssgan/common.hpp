#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssgan {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

enum class DType : uint8_t { F32 = 1, F64 = 2 };

inline const char* dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }

// Process-wide scalar precision. Reads SSGAN_PRECISION={f32,f64} once; f64
// is the default so gradient checks have headroom.
DType default_dtype();
void set_default_dtype(DType d);

std::string shape_str(const std::vector<int64_t>& shape);

// FNV-1a, used for input digests in check reports and per-parameter seeds.
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a(const std::string& s, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace ssgan
