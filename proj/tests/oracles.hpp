#pragma once

// Test-only reference implementations, kept independent of the library's
// compute paths: plain loops, central differences, closed forms.

#include <cmath>
#include <functional>
#include <vector>

#include "ssgan/ops.hpp"
#include "ssgan/rng.hpp"
#include "ssgan/tape.hpp"
#include "ssgan/tensor.hpp"

namespace oracles {

inline ssgan::Tensor rand_uniform(std::vector<int64_t> shape, ssgan::Rng& rng, double lo,
                                  double hi, ssgan::DType dt = ssgan::DType::F64) {
  ssgan::Tensor t = ssgan::Tensor::empty(std::move(shape), dt);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

inline ssgan::Tensor rand_normal(std::vector<int64_t> shape, ssgan::Rng& rng, double mean,
                                 double stddev, ssgan::DType dt = ssgan::DType::F64) {
  ssgan::Tensor t = ssgan::Tensor::empty(std::move(shape), dt);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(mean, stddev));
  return t;
}

// Values bounded away from zero, for kinked or singular ops.
inline ssgan::Tensor rand_signed_away_from_zero(std::vector<int64_t> shape, ssgan::Rng& rng,
                                                double lo_mag, double hi_mag) {
  ssgan::Tensor t = ssgan::Tensor::empty(std::move(shape), ssgan::DType::F64);
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(lo_mag, hi_mag);
    t.set(i, rng.uniform() < 0.5 ? -mag : mag);
  }
  return t;
}

// Re-evaluates the graph from scratch per probe, so functions that
// themselves call backward() are handled uniformly.
using GraphFn =
    std::function<ssgan::Variable(ssgan::Tape&, const std::vector<ssgan::Variable>&)>;

struct FdResult {
  double max_rel = 0.0;
  double worst_ad = 0.0;
  double worst_fd = 0.0;
};

inline double eval_scalar(const GraphFn& f, const std::vector<ssgan::Tensor>& inputs) {
  ssgan::Tape tape;
  std::vector<ssgan::Variable> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(ssgan::make_leaf(t.clone()));
  return f(tape, vars).value().item();
}

inline FdResult fd_check(const GraphFn& f, const std::vector<ssgan::Tensor>& inputs,
                         double step = 1e-5) {
  ssgan::Tape tape;
  std::vector<ssgan::Variable> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(ssgan::make_leaf(t.clone()));
  ssgan::Variable out = f(tape, vars);
  auto grads = ssgan::backward(tape, out, vars);

  FdResult res;
  for (size_t vi = 0; vi < inputs.size(); ++vi) {
    const ssgan::Tensor& g = grads.at(vars[vi].node()).value();
    for (int64_t e = 0; e < inputs[vi].numel(); ++e) {
      std::vector<ssgan::Tensor> plus, minus;
      for (size_t k = 0; k < inputs.size(); ++k) {
        plus.push_back(inputs[k].clone());
        minus.push_back(inputs[k].clone());
      }
      plus[vi].set(e, inputs[vi].at(e) + step);
      minus[vi].set(e, inputs[vi].at(e) - step);
      const double fd = (eval_scalar(f, plus) - eval_scalar(f, minus)) / (2.0 * step);
      const double ad = g.at(e);
      const double rel = std::abs(ad - fd) / std::max(1.0, std::abs(fd));
      if (rel > res.max_rel) {
        res.max_rel = rel;
        res.worst_ad = ad;
        res.worst_fd = fd;
      }
    }
  }
  return res;
}

// Explicit triple loop for (2,3,1)*(1,1,4)-style broadcasts.
inline ssgan::Tensor broadcast_mul_3d_oracle(const ssgan::Tensor& a, const ssgan::Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const int64_t d0 = std::max(as[0], bs[0]);
  const int64_t d1 = std::max(as[1], bs[1]);
  const int64_t d2 = std::max(as[2], bs[2]);
  ssgan::Tensor out = ssgan::Tensor::empty({d0, d1, d2}, a.dtype());
  for (int64_t i = 0; i < d0; ++i) {
    for (int64_t j = 0; j < d1; ++j) {
      for (int64_t k = 0; k < d2; ++k) {
        const double av =
            a.at(((i % as[0]) * as[1] + (j % as[1])) * as[2] + (k % as[2]));
        const double bv =
            b.at(((i % bs[0]) * bs[1] + (j % bs[1])) * bs[2] + (k % bs[2]));
        out.set((i * d1 + j) * d2 + k, av * bv);
      }
    }
  }
  return out;
}

// Transposed convolution by definition: every input site scatters its
// kernel-weighted value, one element at a time, bounds checked per element.
inline ssgan::Tensor tconv2d_scatter_oracle(const ssgan::Tensor& x, const ssgan::Tensor& w,
                                            int64_t stride, int64_t pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const int64_t B = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
  const int64_t Co = ws[1], kH = ws[2], kW = ws[3];
  const int64_t OH = (H - 1) * stride - 2 * pad + kH;
  const int64_t OW = (W - 1) * stride - 2 * pad + kW;
  ssgan::Tensor out = ssgan::Tensor::zeros({B, Co, OH, OW}, x.dtype());
  for (int64_t b = 0; b < B; ++b)
    for (int64_t ci = 0; ci < Ci; ++ci)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t wp = 0; wp < W; ++wp)
          for (int64_t co = 0; co < Co; ++co)
            for (int64_t kh = 0; kh < kH; ++kh)
              for (int64_t kw = 0; kw < kW; ++kw) {
                const int64_t oh = h * stride - pad + kh;
                const int64_t ow = wp * stride - pad + kw;
                if (oh < 0 || oh >= OH || ow < 0 || ow >= OW) continue;
                const int64_t oi = ((b * Co + co) * OH + oh) * OW + ow;
                const double xv = x.at(((b * Ci + ci) * H + h) * W + wp);
                const double wv = w.at(((ci * Co + co) * kH + kh) * kW + kw);
                out.set(oi, out.at(oi) + xv * wv);
              }
  return out;
}

// 1x1 stride-1 transposed convolution as an independent per-pixel
// matrix-vector product: out[b,:,j,k] = W^T x[b,:,j,k].
inline ssgan::Tensor tconv1x1_matmul_oracle(const ssgan::Tensor& x, const ssgan::Tensor& w) {
  const auto& xs = x.shape();
  const int64_t B = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
  const int64_t Co = w.shape()[1];
  ssgan::Tensor out = ssgan::Tensor::zeros({B, Co, H, W}, x.dtype());
  for (int64_t b = 0; b < B; ++b)
    for (int64_t j = 0; j < H; ++j)
      for (int64_t k = 0; k < W; ++k)
        for (int64_t co = 0; co < Co; ++co) {
          double acc = 0.0;
          for (int64_t ci = 0; ci < Ci; ++ci) {
            acc += x.at(((b * Ci + ci) * H + j) * W + k) * w.at(ci * Co + co);
          }
          out.set(((b * Co + co) * H + j) * W + k, acc);
        }
  return out;
}

inline double max_abs_diff(const ssgan::Tensor& a, const ssgan::Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

inline double max_rel_diff(const ssgan::Tensor& a, const ssgan::Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a.at(i) - b.at(i)) / std::max(1.0, std::abs(b.at(i))));
  }
  return m;
}

}  // namespace oracles
