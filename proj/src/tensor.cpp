#include "ssgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace ssgan {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw Error("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::vector<int64_t> row_major_strides(const std::vector<int64_t>& shape) {
  std::vector<int64_t> strides(shape.size());
  int64_t acc = 1;
  for (size_t i = shape.size(); i-- > 0;) {
    strides[i] = acc;
    acc *= shape[i];
  }
  return strides;
}

std::vector<int64_t> broadcast_shapes(const std::vector<int64_t>& a, const std::vector<int64_t>& b,
                                      const std::string& op) {
  const size_t rank = std::max(a.size(), b.size());
  std::vector<int64_t> out(rank);
  for (size_t i = 0; i < rank; ++i) {
    const int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw Error(op + ": shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
    }
    out[rank - 1 - i] = std::max(da, db);
  }
  return out;
}

Tensor Tensor::empty(std::vector<int64_t> shape, DType dtype) {
  Tensor t;
  t.numel_ = shape_numel(shape);
  t.shape_ = std::move(shape);
  t.dtype_ = dtype;
  if (dtype == DType::F32) {
    t.f32_ = std::make_shared<std::vector<float>>(static_cast<size_t>(t.numel_));
  } else {
    t.f64_ = std::make_shared<std::vector<double>>(static_cast<size_t>(t.numel_));
  }
  return t;
}

Tensor Tensor::zeros(std::vector<int64_t> shape, DType dtype) {
  return empty(std::move(shape), dtype);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, DType dtype) {
  Tensor t = empty(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.mut<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

Tensor Tensor::from(std::vector<int64_t> shape, const std::vector<double>& values, DType dtype) {
  Tensor t = empty(std::move(shape), dtype);
  if (static_cast<int64_t>(values.size()) != t.numel_) {
    throw Error("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                shape_str(t.shape_));
  }
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.mut<T>();
    for (size_t i = 0; i < values.size(); ++i) d[i] = static_cast<T>(values[i]);
  });
  return t;
}

double Tensor::at(int64_t flat) const {
  return dtype_ == DType::F32 ? static_cast<double>((*f32_)[static_cast<size_t>(flat)])
                              : (*f64_)[static_cast<size_t>(flat)];
}

void Tensor::set(int64_t flat, double v) {
  if (dtype_ == DType::F32) {
    (*f32_)[static_cast<size_t>(flat)] = static_cast<float>(v);
  } else {
    (*f64_)[static_cast<size_t>(flat)] = v;
  }
}

double Tensor::item() const {
  if (numel_ != 1) throw Error("item() on tensor of shape " + shape_str(shape_));
  return at(0);
}

Tensor Tensor::clone() const {
  Tensor t = empty(shape_, dtype_);
  if (dtype_ == DType::F32) {
    *t.f32_ = *f32_;
  } else {
    *t.f64_ = *f64_;
  }
  return t;
}

Tensor Tensor::astype(DType target) const {
  if (target == dtype_) return *this;
  Tensor t = empty(shape_, target);
  for (int64_t i = 0; i < numel_; ++i) t.set(i, at(i));
  return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
  if (shape_numel(shape) != numel_) {
    throw Error("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<size_t>(numel_));
  for (int64_t i = 0; i < numel_; ++i) out[static_cast<size_t>(i)] = at(i);
  return out;
}

bool Tensor::all_finite() const {
  bool ok = true;
  dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    for (T v : data<T>()) {
      if (!std::isfinite(static_cast<double>(v))) {
        ok = false;
        break;
      }
    }
  });
  return ok;
}

uint64_t Tensor::digest() const {
  uint64_t h = fnv1a(shape_.data(), shape_.size() * sizeof(int64_t));
  dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto d = data<T>();
    h = fnv1a(d.data(), d.size() * sizeof(T), h);
  });
  return h;
}

namespace {

constexpr char kMagic[4] = {'S', 'S', 'G', 'T'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw Error("tensor container: truncated stream");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 4);
  write_le<uint32_t>(os, kVersion);
  write_le<uint32_t>(os, static_cast<uint32_t>(t.rank()));
  for (int64_t e : t.shape()) write_le<uint32_t>(os, static_cast<uint32_t>(e));
  write_le<uint8_t>(os, static_cast<uint8_t>(t.dtype()));
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (T v : t.data<T>()) write_le<T>(os, v);
  });
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error("tensor container: bad magic");
  }
  const uint32_t version = read_le<uint32_t>(is);
  if (version != kVersion) {
    throw Error("tensor container: unsupported version " + std::to_string(version));
  }
  const uint32_t rank = read_le<uint32_t>(is);
  if (rank > 8) throw Error("tensor container: rank " + std::to_string(rank) + " out of range");
  std::vector<int64_t> shape(rank);
  for (auto& e : shape) e = read_le<uint32_t>(is);
  const auto tag = read_le<uint8_t>(is);
  if (tag != static_cast<uint8_t>(DType::F32) && tag != static_cast<uint8_t>(DType::F64)) {
    throw Error("tensor container: unknown dtype tag " + std::to_string(tag));
  }
  Tensor t = Tensor::empty(std::move(shape), static_cast<DType>(tag));
  dispatch(t.dtype(), [&](auto dtag) {
    using T = decltype(dtag);
    auto d = t.mut<T>();
    for (auto& v : d) v = read_le<T>(is);
  });
  return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + path);
  write_tensor(f, t);
  if (!f) throw Error("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open: " + path);
  return read_tensor(f);
}

}  // namespace ssgan
