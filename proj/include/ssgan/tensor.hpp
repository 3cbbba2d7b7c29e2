#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ssgan/common.hpp"

namespace ssgan {

// Dense row-major N-d array. Rank-0 tensors are scalars (numel 1). Buffers
// are shared on copy; the convention is that only the creating code mutates
// a buffer, everything downstream treats tensors as immutable values.
class Tensor {
 public:
  Tensor() = default;

  static Tensor empty(std::vector<int64_t> shape, DType dtype);
  static Tensor zeros(std::vector<int64_t> shape, DType dtype);
  static Tensor full(std::vector<int64_t> shape, double value, DType dtype);
  static Tensor scalar(double value, DType dtype);
  // Values are given as doubles and narrowed to the requested dtype.
  static Tensor from(std::vector<int64_t> shape, const std::vector<double>& values, DType dtype);

  bool defined() const { return f32_ != nullptr || f64_ != nullptr; }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t numel() const { return numel_; }
  int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
  DType dtype() const { return dtype_; }

  template <class T>
  std::span<const T> data() const;
  template <class T>
  std::span<T> mut();

  // Element access through double, for tests and glue code; prefer spans in
  // kernels.
  double at(int64_t flat) const;
  void set(int64_t flat, double v);
  double item() const;

  Tensor clone() const;
  Tensor astype(DType target) const;
  // Shares the buffer; product of the new shape must match numel.
  Tensor reshaped(std::vector<int64_t> shape) const;
  std::vector<double> to_vector() const;

  bool all_finite() const;
  uint64_t digest() const;

 private:
  std::vector<int64_t> shape_;
  int64_t numel_ = 0;
  DType dtype_ = DType::F64;
  std::shared_ptr<std::vector<float>> f32_;
  std::shared_ptr<std::vector<double>> f64_;
};

template <>
inline std::span<const float> Tensor::data<float>() const {
  return {f32_->data(), f32_->size()};
}
template <>
inline std::span<const double> Tensor::data<double>() const {
  return {f64_->data(), f64_->size()};
}
template <>
inline std::span<float> Tensor::mut<float>() {
  return {f32_->data(), f32_->size()};
}
template <>
inline std::span<double> Tensor::mut<double>() {
  return {f64_->data(), f64_->size()};
}

// Calls f with a value of the tensor's scalar type as a tag.
template <class F>
decltype(auto) dispatch(DType dt, F&& f) {
  if (dt == DType::F32) return f(float{});
  return f(double{});
}

int64_t shape_numel(const std::vector<int64_t>& shape);
std::vector<int64_t> row_major_strides(const std::vector<int64_t>& shape);
// Trailing-dimension alignment with size-1 expansion; throws naming `op` and
// both shapes when incompatible.
std::vector<int64_t> broadcast_shapes(const std::vector<int64_t>& a, const std::vector<int64_t>& b,
                                      const std::string& op);

// Flat binary container: magic "SSGT", u32 version, u32 rank, u32 extents,
// u8 dtype tag, then little-endian scalars.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace ssgan
