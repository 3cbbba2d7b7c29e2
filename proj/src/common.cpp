#include "ssgan/common.hpp"

#include <cstdlib>
#include <cstring>
#include <sstream>

namespace ssgan {

namespace {

DType initial_dtype() {
  const char* env = std::getenv("SSGAN_PRECISION");
  if (env != nullptr) {
    if (std::strcmp(env, "f32") == 0) return DType::F32;
    if (std::strcmp(env, "f64") == 0) return DType::F64;
    throw Error(std::string("SSGAN_PRECISION must be f32 or f64, got '") + env + "'");
  }
  return DType::F64;
}

DType& dtype_slot() {
  static DType d = initial_dtype();
  return d;
}

}  // namespace

DType default_dtype() { return dtype_slot(); }
void set_default_dtype(DType d) { dtype_slot() = d; }

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a(const std::string& s, uint64_t seed) { return fnv1a(s.data(), s.size(), seed); }

}  // namespace ssgan
