#include "ssgan/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ssgan/ops.hpp"
#include "ssgan/rng.hpp"

namespace ssgan::metrics {

GaussianStats feature_stats(const Tensor& features, double shrinkage) {
  const auto& s = features.shape();
  if (s.size() != 2) throw Error("feature_stats: expected [N, d], got " + shape_str(s));
  const int64_t n = s[0], d = s[1];
  if (n < 2) throw Error("feature_stats: need at least 2 samples, got " + std::to_string(n));
  GaussianStats st;
  st.mu = Tensor::zeros({d}, DType::F64);
  st.sigma = Tensor::zeros({d, d}, DType::F64);
  std::vector<double> mu(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) mu[static_cast<size_t>(j)] += features.at(i * d + j);
  }
  for (auto& v : mu) v /= static_cast<double>(n);
  std::vector<double> cov(static_cast<size_t>(d * d), 0.0);
  std::vector<double> row(static_cast<size_t>(d));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      row[static_cast<size_t>(j)] = features.at(i * d + j) - mu[static_cast<size_t>(j)];
    }
    for (int64_t j = 0; j < d; ++j) {
      const double rj = row[static_cast<size_t>(j)];
      if (rj == 0.0) continue;
      double* crow = cov.data() + j * d;
      for (int64_t k = 0; k < d; ++k) crow[k] += rj * row[static_cast<size_t>(k)];
    }
  }
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (auto& v : cov) v *= inv;
  if (shrinkage > 0.0) {
    double diag_mean = 0.0;
    for (int64_t j = 0; j < d; ++j) diag_mean += cov[static_cast<size_t>(j * d + j)];
    diag_mean /= static_cast<double>(d);
    for (int64_t j = 0; j < d; ++j) cov[static_cast<size_t>(j * d + j)] += shrinkage * diag_mean;
  }
  for (int64_t j = 0; j < d; ++j) st.mu.set(j, mu[static_cast<size_t>(j)]);
  for (int64_t j = 0; j < d * d; ++j) st.sigma.set(j, cov[static_cast<size_t>(j)]);
  return st;
}

void sym_eigen(const Tensor& m, std::vector<double>& vals, std::vector<double>& vecs) {
  const auto& s = m.shape();
  if (s.size() != 2 || s[0] != s[1]) throw Error("sym_eigen: expected square matrix");
  const int64_t n = s[0];
  std::vector<double> a(static_cast<size_t>(n * n));
  for (int64_t i = 0; i < n * n; ++i) a[static_cast<size_t>(i)] = m.at(i);
  // enforce symmetry
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (a[static_cast<size_t>(i * n + j)] + a[static_cast<size_t>(j * n + i)]);
      a[static_cast<size_t>(i * n + j)] = v;
      a[static_cast<size_t>(j * n + i)] = v;
    }
  }
  vecs.assign(static_cast<size_t>(n * n), 0.0);
  for (int64_t i = 0; i < n; ++i) vecs[static_cast<size_t>(i * n + i)] = 1.0;
  auto off_norm = [&] {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < n; ++j) acc += a[static_cast<size_t>(i * n + j)] * a[static_cast<size_t>(i * n + j)];
    return acc;
  };
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps && off_norm() > 1e-24; ++sweep) {
    for (int64_t p = 0; p < n - 1; ++p) {
      for (int64_t q = p + 1; q < n; ++q) {
        const double apq = a[static_cast<size_t>(p * n + q)];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[static_cast<size_t>(p * n + p)];
        const double aqq = a[static_cast<size_t>(q * n + q)];
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (int64_t k = 0; k < n; ++k) {
          const double akp = a[static_cast<size_t>(k * n + p)];
          const double akq = a[static_cast<size_t>(k * n + q)];
          a[static_cast<size_t>(k * n + p)] = c * akp - sn * akq;
          a[static_cast<size_t>(k * n + q)] = sn * akp + c * akq;
        }
        for (int64_t k = 0; k < n; ++k) {
          const double apk = a[static_cast<size_t>(p * n + k)];
          const double aqk = a[static_cast<size_t>(q * n + k)];
          a[static_cast<size_t>(p * n + k)] = c * apk - sn * aqk;
          a[static_cast<size_t>(q * n + k)] = sn * apk + c * aqk;
        }
        for (int64_t k = 0; k < n; ++k) {
          const double vkp = vecs[static_cast<size_t>(k * n + p)];
          const double vkq = vecs[static_cast<size_t>(k * n + q)];
          vecs[static_cast<size_t>(k * n + p)] = c * vkp - sn * vkq;
          vecs[static_cast<size_t>(k * n + q)] = sn * vkp + c * vkq;
        }
      }
    }
  }
  vals.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) vals[static_cast<size_t>(i)] = a[static_cast<size_t>(i * n + i)];
}

namespace {

// V diag(f(vals)) V^T
std::vector<double> eigen_apply(const std::vector<double>& vals, const std::vector<double>& vecs,
                                int64_t n, const std::function<double(double)>& f) {
  std::vector<double> out(static_cast<size_t>(n * n), 0.0);
  for (int64_t k = 0; k < n; ++k) {
    const double fv = f(vals[static_cast<size_t>(k)]);
    if (fv == 0.0) continue;
    for (int64_t i = 0; i < n; ++i) {
      const double vik = vecs[static_cast<size_t>(i * n + k)] * fv;
      if (vik == 0.0) continue;
      for (int64_t j = 0; j < n; ++j) {
        out[static_cast<size_t>(i * n + j)] += vik * vecs[static_cast<size_t>(j * n + k)];
      }
    }
  }
  return out;
}

double clamp_eigenvalue(double v, const char* what) {
  if (v < -1e-6) {
    throw Error(std::string("fid: eigenvalue ") + std::to_string(v) + " of " + what +
                " below -1e-6; covariance estimation bug");
  }
  return v < 0.0 ? 0.0 : v;
}

}  // namespace

double fid(const GaussianStats& a, const GaussianStats& b) {
  const int64_t d = a.mu.numel();
  if (b.mu.numel() != d || a.sigma.shape() != std::vector<int64_t>{d, d} ||
      b.sigma.shape() != std::vector<int64_t>{d, d}) {
    throw Error("fid: dimension mismatch: " + shape_str(a.sigma.shape()) + " vs " +
                shape_str(b.sigma.shape()));
  }
  double mean_term = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    const double diff = a.mu.at(i) - b.mu.at(i);
    mean_term += diff * diff;
  }
  std::vector<double> vals, vecs;
  sym_eigen(a.sigma, vals, vecs);
  for (auto& v : vals) v = clamp_eigenvalue(v, "sigma_x");
  const auto sqrt_a = eigen_apply(vals, vecs, d, [](double v) { return std::sqrt(v); });

  // M = sqrt_a * sigma_b * sqrt_a
  std::vector<double> tmp(static_cast<size_t>(d * d), 0.0);
  for (int64_t i = 0; i < d; ++i)
    for (int64_t k = 0; k < d; ++k) {
      const double v = sqrt_a[static_cast<size_t>(i * d + k)];
      if (v == 0.0) continue;
      for (int64_t j = 0; j < d; ++j) tmp[static_cast<size_t>(i * d + j)] += v * b.sigma.at(k * d + j);
    }
  Tensor m = Tensor::zeros({d, d}, DType::F64);
  for (int64_t i = 0; i < d; ++i)
    for (int64_t k = 0; k < d; ++k) {
      const double v = tmp[static_cast<size_t>(i * d + k)];
      if (v == 0.0) continue;
      for (int64_t j = 0; j < d; ++j) {
        m.set(i * d + j, m.at(i * d + j) + v * sqrt_a[static_cast<size_t>(k * d + j)]);
      }
    }
  std::vector<double> mvals, mvecs;
  sym_eigen(m, mvals, mvecs);
  double trace_sqrt = 0.0;
  for (double v : mvals) trace_sqrt += std::sqrt(clamp_eigenvalue(v, "cross term"));

  double trace_a = 0.0, trace_b = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    trace_a += a.sigma.at(i * d + i);
    trace_b += b.sigma.at(i * d + i);
  }
  const double value = mean_term + trace_a + trace_b - 2.0 * trace_sqrt;
  if (value < 0.0) {
    if (value < -1e-6) throw Error("fid: negative distance " + std::to_string(value));
    return 0.0;
  }
  return value;
}

namespace {

Tensor avgpool_to_8(const Tensor& images) {
  const auto& s = images.shape();
  const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  const int64_t target = std::min<int64_t>(8, std::min(h, w));
  const int64_t fh = h / target, fw = w / target;
  Tensor out = Tensor::zeros({n, c * target * target}, DType::F64);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t ci = 0; ci < c; ++ci) {
      for (int64_t oy = 0; oy < target; ++oy) {
        for (int64_t ox = 0; ox < target; ++ox) {
          double acc = 0.0;
          for (int64_t dy = 0; dy < fh; ++dy)
            for (int64_t dx = 0; dx < fw; ++dx) {
              acc += images.at(((i * c + ci) * h + oy * fh + dy) * w + ox * fw + dx);
            }
          out.set(i * c * target * target + (ci * target + oy) * target + ox,
                  acc / static_cast<double>(fh * fw));
        }
      }
    }
  }
  return out;
}

Tensor toycnn_features(const Tensor& images) {
  const auto& s = images.shape();
  const int64_t n = s[0], c = s[1];
  static constexpr uint64_t kFixedSeed = 0xF1DCA11Eull;
  Rng rng = substream(kFixedSeed, "toycnn/" + std::to_string(c));
  auto make_kernel = [&](std::vector<int64_t> shape, int64_t fan_in) {
    Tensor t = Tensor::empty(std::move(shape), DType::F64);
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(0.0, scale));
    return t;
  };
  const Tensor w1 = make_kernel({8, c, 3, 3}, c * 9);
  const Tensor w2 = make_kernel({16, 8, 3, 3}, 8 * 9);
  Tensor x = images.astype(DType::F64);
  auto act = [](Tensor t) {
    for (int64_t i = 0; i < t.numel(); ++i) {
      if (t.at(i) < 0) t.set(i, 0.0);
    }
    return t;
  };
  Tensor h1 = act(ops::conv2d_val(x, w1, 2, 1));
  Tensor h2 = act(ops::conv2d_val(h1, w2, 2, 1));
  const auto& hs = h2.shape();
  const int64_t feat = hs[1];
  const int64_t hw = hs[2] * hs[3];
  Tensor out = Tensor::zeros({n, feat}, DType::F64);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t f = 0; f < feat; ++f) {
      double acc = 0.0;
      for (int64_t p = 0; p < hw; ++p) acc += h2.at((i * feat + f) * hw + p);
      out.set(i * feat + f, acc / static_cast<double>(hw));
    }
  }
  return out;
}

}  // namespace

Extractor make_extractor(const std::string& name) {
  if (name == "pixel") {
    return [](const Tensor& images) { return avgpool_to_8(images.astype(DType::F64)); };
  }
  if (name == "toycnn") {
    return [](const Tensor& images) { return toycnn_features(images); };
  }
  throw Error("unknown feature extractor '" + name + "' (pixel|toycnn)");
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error("pearson: need two equal-length sequences of at least 2 values");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

double relative_fid_decrease(double fid_baseline, double fid_ours) {
  if (fid_baseline <= 0.0) {
    throw Error("relative_fid_decrease: baseline must be positive, got " +
                std::to_string(fid_baseline));
  }
  return 100.0 * (fid_baseline - fid_ours) / fid_baseline;
}

double avg_position_sparsity(const std::vector<Tensor>& per_stage_xi) {
  if (per_stage_xi.empty()) throw Error("avg_position_sparsity: empty stage list");
  double acc = 0.0;
  for (const auto& xi : per_stage_xi) {
    if (xi.numel() == 0) throw Error("avg_position_sparsity: empty stage");
    double stage = 0.0;
    for (int64_t i = 0; i < xi.numel(); ++i) stage += xi.at(i);
    acc += stage / static_cast<double>(xi.numel());
  }
  return acc / static_cast<double>(per_stage_xi.size());
}

SignStability sign_stability(const SignHistory& history, int64_t burn_in_step) {
  if (history.steps.empty() || history.flags.size() != history.steps.size()) {
    throw Error("sign_stability: empty or inconsistent history");
  }
  for (size_t t = 1; t < history.steps.size(); ++t) {
    if (history.steps[t] <= history.steps[t - 1]) {
      throw Error("sign_stability: steps must increase");
    }
  }
  const size_t rows = history.steps.size();
  const size_t k = history.flags[0].size();
  SignStability out;
  out.stable_from.resize(k);
  size_t stable = 0;
  for (size_t j = 0; j < k; ++j) {
    const uint8_t last = history.flags[rows - 1][j];
    size_t from = 0;
    for (size_t t = rows; t-- > 0;) {
      if (history.flags[t][j] != last) {
        from = t + 1;
        break;
      }
    }
    out.stable_from[j] = history.steps[from];
    if (out.stable_from[j] <= burn_in_step) ++stable;
  }
  out.stable_fraction = k == 0 ? 1.0 : static_cast<double>(stable) / static_cast<double>(k);
  return out;
}

CorrelationTable builtin_correlation_table_64() {
  return {{0.44, 0.47, 0.26, 0.39}, {11.97, 6.83, 4.76, 6.86}};
}

CorrelationTable builtin_correlation_table_128() {
  return {{0.53, 0.47, 0.21, 0.31}, {20.21, 16.17, 14.43, 17.02}};
}

std::vector<std::pair<double, double>> builtin_fid_baseline_pairs() {
  return {
      {7.43, 6.26},    // grayscale 32
      {10.42, 8.32},   // grayscale 128
      {20.37, 15.92},  // grayscale 64
      {20.41, 17.67},  // grayscale 128 (second corpus)
      {43.77, 36.69},  // rgb 128
      {63.88, 56.23},  // rgb 64
      {33.16, 28.88},  // rgb 32
      {58.81, 54.78},  // rgb 64 (second corpus)
      {15.95, 15.19},  // rgb 64 (faces)
      {32.40, 27.72},  // rgb 128 (faces)
      {59.12, 55.06},  // rgb 64 (scenes)
      {102.16, 84.78}, // rgb 128 (scenes)
  };
}

}  // namespace ssgan::metrics
