#pragma once

#include <vector>

#include "ssgan/tape.hpp"

namespace ssgan::ops {

// Every op computes its forward value eagerly. When `tape` is null or no
// input carries gradient, the result is a plain constant; otherwise a node
// is recorded. Shape errors name the op and the offending shapes.

Variable add(Tape* tape, const Variable& a, const Variable& b);
Variable sub(Tape* tape, const Variable& a, const Variable& b);
Variable mul(Tape* tape, const Variable& a, const Variable& b);
Variable divide(Tape* tape, const Variable& a, const Variable& b);

Variable matmul(Tape* tape, const Variable& a, const Variable& b);
Variable transpose(Tape* tape, const Variable& a);

Variable reshape(Tape* tape, const Variable& a, std::vector<int64_t> shape);
Variable concat(Tape* tape, const std::vector<Variable>& xs, int64_t axis);
Variable slice(Tape* tape, const Variable& a, std::vector<int64_t> starts,
               std::vector<int64_t> stops);
Variable broadcast_to(Tape* tape, const Variable& a, std::vector<int64_t> shape);

Variable sum_axes(Tape* tape, const Variable& a, std::vector<int64_t> axes, bool keepdims = false);
Variable sum_all(Tape* tape, const Variable& a);
Variable mean_axes(Tape* tape, const Variable& a, std::vector<int64_t> axes, bool keepdims = false);
Variable mean_all(Tape* tape, const Variable& a);
// Sums a gradient down to `shape` (inverse of broadcasting).
Variable reduce_to(Tape* tape, const Variable& a, const std::vector<int64_t>& shape);

Variable relu(Tape* tape, const Variable& a);
Variable leaky_relu(Tape* tape, const Variable& a, double slope);
Variable tanh(Tape* tape, const Variable& a);
Variable square(Tape* tape, const Variable& a);
Variable sqrt(Tape* tape, const Variable& a);
// scale * a + shift, elementwise with scalar coefficients.
Variable affine(Tape* tape, const Variable& a, double scale, double shift);
Variable neg(Tape* tape, const Variable& a);
Variable add_scalar(Tape* tape, const Variable& a, double v);
Variable mul_scalar(Tape* tape, const Variable& a, double v);

// x: [B,Cin,H,W], w: [Cout,Cin,kH,kW]. Requires (H + 2*pad - kH) % stride == 0.
Variable conv2d(Tape* tape, const Variable& x, const Variable& w, int64_t stride, int64_t pad);
// x: [B,Cin,H,W], w: [Cin,Cout,kH,kW]. Output extent (H-1)*stride - 2*pad + kH.
// Implemented as explicit scatter-add.
Variable conv_transpose2d(Tape* tape, const Variable& x, const Variable& w, int64_t stride,
                          int64_t pad);

Variable upsample2x(Tape* tape, const Variable& x);
Variable downsample2x_sum(Tape* tape, const Variable& x);

// Tensor-level forward helpers for code that never differentiates.
Tensor matmul_val(const Tensor& a, const Tensor& b);
Tensor conv2d_val(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad);
Tensor conv_transpose2d_val(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad);

}  // namespace ssgan::ops
