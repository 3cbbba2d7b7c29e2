#include "ssgan/sastm.hpp"

#include <cmath>

namespace ssgan::sastm {

namespace op = ssgan::ops;

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kFull: return "full";
    case Mode::kWithoutPsm: return "without-psm";
    case Mode::kWithoutCsm: return "without-csm";
    case Mode::kOff: return "off";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  if (s == "full") return Mode::kFull;
  if (s == "without-psm" || s == "without_psm") return Mode::kWithoutPsm;
  if (s == "without-csm" || s == "without_csm") return Mode::kWithoutCsm;
  if (s == "off") return Mode::kOff;
  throw Error("unknown sastm mode '" + s + "' (full|without-psm|without-csm|off)");
}

StageNet::StageNet(nn::ParamStore& store, const std::string& name, int64_t latent_dim,
                   int64_t trunk_width, int64_t channels, int64_t height, int64_t width,
                   Mode mode, bool share_beta_2x2, uint64_t seed, DType dt)
    : channels_(channels), height_(height), width_(width), mode_(mode),
      share_beta_2x2_(share_beta_2x2) {
  if (mode == Mode::kOff) throw Error("StageNet constructed with mode off");
  if (share_beta_2x2 && (height % 2 != 0 || width % 2 != 0)) {
    throw Error("shared 2x2 position coefficients need even extents, got " +
                std::to_string(height) + "x" + std::to_string(width));
  }
  trunk_ = nn::Linear(store, name + ".trunk", latent_dim, trunk_width, seed, dt);
  // Heads start near 1 (small weights, bias +1) so coefficients begin dense
  // and strictly positive; ReLU-dead-at-init heads could never recover.
  if (mode != Mode::kWithoutCsm) {
    channel_head_ = nn::Linear::with_normal_init(store, name + ".channel_head", trunk_width,
                                                 channels, 0.01, 1.0, seed, dt);
  }
  if (mode != Mode::kWithoutPsm) {
    const int64_t positions = share_beta_2x2 ? (height / 2) * (width / 2) : height * width;
    position_head_ = nn::Linear::with_normal_init(store, name + ".position_head", trunk_width,
                                                  positions, 0.01, 1.0, seed, dt);
  }
}

Coefficients StageNet::coefficients(Tape* tape, const Variable& z) const {
  if (z.shape().size() != 2) {
    throw Error("sastm: latent batch must be 2-d, got " + shape_str(z.shape()));
  }
  const int64_t batch = z.shape()[0];
  Variable f = op::relu(tape, trunk_.forward(tape, z));
  Coefficients out;
  if (mode_ != Mode::kWithoutCsm) {
    out.alpha = op::relu(tape, channel_head_.forward(tape, f));
  } else {
    out.alpha = make_constant(Tensor::zeros({batch, channels_}, z.dtype()));
  }
  if (mode_ != Mode::kWithoutPsm) {
    Variable raw = op::relu(tape, position_head_.forward(tape, f));
    if (share_beta_2x2_) {
      Variable grid = op::reshape(tape, raw, {batch, 1, height_ / 2, width_ / 2});
      out.beta = op::reshape(tape, op::upsample2x(tape, grid), {batch, height_, width_});
    } else {
      out.beta = op::reshape(tape, raw, {batch, height_, width_});
    }
  } else {
    out.beta = make_constant(Tensor::zeros({batch, height_, width_}, z.dtype()));
  }
  return out;
}

Variable recombine(Tape* tape, const Variable& h, const Coefficients& coeffs) {
  const auto& hs = h.shape();
  if (hs.size() != 4) throw Error("recombine: feature maps must be 4-d, got " + shape_str(hs));
  const int64_t b = hs[0], c = hs[1], ht = hs[2], wd = hs[3];
  const auto& as = coeffs.alpha.shape();
  const auto& bs = coeffs.beta.shape();
  if (as != std::vector<int64_t>{b, c} || bs != std::vector<int64_t>{b, ht, wd}) {
    throw Error("recombine: feature maps " + shape_str(hs) + " need alpha [" +
                std::to_string(b) + ", " + std::to_string(c) + "] and beta [" +
                std::to_string(b) + ", " + std::to_string(ht) + ", " + std::to_string(wd) +
                "], got " + shape_str(as) + " and " + shape_str(bs));
  }
  Variable a4 = op::reshape(tape, coeffs.alpha, {b, c, 1, 1});
  Variable b4 = op::reshape(tape, coeffs.beta, {b, 1, ht, wd});
  return op::mul(tape, h, op::add(tape, a4, b4));
}

SparsityStats sparsity_stats(const Tensor& x, double zero_threshold) {
  const auto& s = x.shape();
  if (s.size() != 4) throw Error("sparsity_stats: expected 4-d maps, got " + shape_str(s));
  if (zero_threshold < 0) throw Error("sparsity_stats: negative zero_threshold");
  const int64_t b = s[0], c = s[1], hw = s[2] * s[3];
  SparsityStats stats;
  stats.zero_threshold = zero_threshold;
  stats.xi = Tensor::zeros({c}, DType::F64);
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = x.data<T>().data();
    for (int64_t ci = 0; ci < c; ++ci) {
      int64_t zeros = 0;
      for (int64_t bi = 0; bi < b; ++bi) {
        const T* row = p + (bi * c + ci) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          if (std::abs(static_cast<double>(row[i])) <= zero_threshold) ++zeros;
        }
      }
      stats.xi.set(ci, static_cast<double>(zeros) / static_cast<double>(b * hw));
    }
  });
  int64_t sparse = 0;
  for (int64_t ci = 0; ci < c; ++ci) {
    if (stats.xi.at(ci) >= kSparseChannelCutoff) ++sparse;
  }
  stats.zeta = static_cast<double>(sparse) / static_cast<double>(c);
  return stats;
}

AnalyticGrads analytic_recombine_grads(const Tensor& upstream, const Tensor& h,
                                       const Tensor& alpha, const Tensor& beta) {
  const auto& s = h.shape();
  if (upstream.shape() != s) {
    throw Error("analytic_recombine_grads: upstream " + shape_str(upstream.shape()) +
                " vs maps " + shape_str(s));
  }
  const int64_t b = s[0], c = s[1], ht = s[2], wd = s[3];
  AnalyticGrads g;
  g.grad_h = Tensor::zeros(s, h.dtype());
  g.grad_alpha = Tensor::zeros({b, c}, h.dtype());
  g.grad_beta = Tensor::zeros({b, ht, wd}, h.dtype());
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t ci = 0; ci < c; ++ci) {
      const double a = alpha.at(bi * c + ci);
      double acc_alpha = 0.0;
      for (int64_t j = 0; j < ht; ++j) {
        for (int64_t k = 0; k < wd; ++k) {
          const int64_t hi = ((bi * c + ci) * ht + j) * wd + k;
          const int64_t pi = (bi * ht + j) * wd + k;
          const double up = upstream.at(hi);
          const double hv = h.at(hi);
          g.grad_h.set(hi, up * (a + beta.at(pi)));
          acc_alpha += up * hv;
          g.grad_beta.set(pi, g.grad_beta.at(pi) + up * hv);
        }
      }
      g.grad_alpha.set(bi * c + ci, acc_alpha);
    }
  }
  return g;
}

}  // namespace ssgan::sastm
