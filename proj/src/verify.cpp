#include "ssgan/verify.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ssgan/models.hpp"
#include "ssgan/ops.hpp"
#include "ssgan/rng.hpp"
#include "ssgan/sastm.hpp"

namespace ssgan::verify {

namespace op = ssgan::ops;

namespace {

void check_toy_stage(const ToyStage& stage, const Tensor& upstream) {
  const int64_t c = stage.channels, h = stage.height, w = stage.width;
  if (stage.weights.shape() != std::vector<int64_t>{c, c} ||
      stage.alpha.shape() != std::vector<int64_t>{c} ||
      stage.beta.shape() != std::vector<int64_t>{h, w} ||
      stage.input.shape() != std::vector<int64_t>{c, h, w} ||
      upstream.shape() != std::vector<int64_t>{c, h, w}) {
    throw Error("toy stage: inconsistent shapes");
  }
}

}  // namespace

StageGrads analytic_stage_grads(const ToyStage& stage, const Tensor& upstream) {
  check_toy_stage(stage, upstream);
  if (stage.bn == ToyStage::Bn::kNormalize) {
    throw Error(
        "analytic_stage_grads: closed form omits the normalization Jacobian; "
        "use the tape comparison for normalize mode");
  }
  const int64_t c = stage.channels, h = stage.height, w = stage.width;
  StageGrads g;
  g.grad_weights = Tensor::zeros({c, c}, DType::F64);
  g.grad_alpha = Tensor::zeros({c}, DType::F64);
  g.grad_beta = Tensor::zeros({h, w}, DType::F64);

  // pre[i,j,k] = sum_m weights[m,i] * input[m,j,k]
  std::vector<double> pre(static_cast<size_t>(c * h * w), 0.0);
  for (int64_t i = 0; i < c; ++i) {
    for (int64_t m = 0; m < c; ++m) {
      const double wv = stage.weights.at(m * c + i);
      if (wv == 0.0) continue;
      for (int64_t p = 0; p < h * w; ++p) {
        pre[static_cast<size_t>(i * h * w + p)] += wv * stage.input.at(m * h * w + p);
      }
    }
  }
  for (int64_t i = 0; i < c; ++i) {
    const double a = stage.alpha.at(i);
    for (int64_t j = 0; j < h; ++j) {
      for (int64_t k = 0; k < w; ++k) {
        const int64_t p = j * w + k;
        const double coeff = a + stage.beta.at(p);
        const double x = coeff * pre[static_cast<size_t>(i * h * w + p)];
        if (x <= 0.0) continue;  // closed gate
        const double up = upstream.at(i * h * w + p);
        for (int64_t m = 0; m < c; ++m) {
          g.grad_weights.set(m * c + i, g.grad_weights.at(m * c + i) +
                                            up * coeff * stage.input.at(m * h * w + p));
        }
        const double pre_v = pre[static_cast<size_t>(i * h * w + p)];
        g.grad_alpha.set(i, g.grad_alpha.at(i) + up * pre_v);
        g.grad_beta.set(p, g.grad_beta.at(p) + up * pre_v);
      }
    }
  }
  return g;
}

StageGrads autodiff_stage_grads(const ToyStage& stage, const Tensor& upstream) {
  check_toy_stage(stage, upstream);
  const int64_t c = stage.channels, h = stage.height, w = stage.width;
  Tape tape;
  Variable wv = make_leaf(stage.weights.reshaped({c, c, 1, 1}).clone());
  Variable alpha = make_leaf(stage.alpha.reshaped({1, c}).clone());
  Variable beta = make_leaf(stage.beta.reshaped({1, h, w}).clone());
  Variable input = make_constant(stage.input.reshaped({1, c, h, w}));

  Variable maps = op::conv_transpose2d(&tape, input, wv, 1, 0);
  sastm::Coefficients coeffs{alpha, beta};
  Variable x = sastm::recombine(&tape, maps, coeffs);
  Variable s = x;
  if (stage.bn == ToyStage::Bn::kNormalize) {
    Variable mu = op::mean_axes(&tape, x, {0, 2, 3}, true);
    Variable xc = op::sub(&tape, x, mu);
    Variable var = op::mean_axes(&tape, op::square(&tape, xc), {0, 2, 3}, true);
    s = op::divide(&tape, xc, op::sqrt(&tape, op::add_scalar(&tape, var, 1e-5)));
  }
  Variable y = op::relu(&tape, s);
  Variable loss = op::sum_all(
      &tape, op::mul(&tape, y, make_constant(upstream.reshaped({1, c, h, w}))));
  auto grads = backward(tape, loss, {wv, alpha, beta});

  StageGrads g;
  g.grad_weights = grads.at(wv.node()).value().reshaped({c, c}).clone();
  g.grad_alpha = grads.at(alpha.node()).value().reshaped({c}).clone();
  g.grad_beta = grads.at(beta.node()).value().reshaped({h, w}).clone();
  return g;
}

MeanDecomposition bn_mean_decomposition(const Tensor& channel_map) {
  MeanDecomposition d;
  const int64_t n = channel_map.numel();
  if (n == 0) throw Error("bn_mean_decomposition: empty map");
  double total = 0.0, positive = 0.0;
  int64_t positives = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double v = channel_map.at(i);
    if (v < 0.0) {
      throw Error("bn_mean_decomposition: negative entry " + std::to_string(v) +
                  "; the identity assumes a nonnegative map");
    }
    total += v;
    if (v > 0.0) {
      positive += v;
      ++positives;
    }
  }
  d.subtracted_mean = total / static_cast<double>(n);
  d.xi = static_cast<double>(n - positives) / static_cast<double>(n);
  d.positive_mean = positives == 0 ? 0.0 : positive / static_cast<double>(positives);
  d.sparse_form = (1.0 - d.xi) * d.positive_mean;
  return d;
}

SignProbabilityStudy sign_probability_study(double half_normal_scale,
                                            const std::vector<double>& xi_grid, int64_t trials,
                                            uint64_t seed) {
  if (!(half_normal_scale > 0.0)) {
    throw Error("sign_probability_study: degenerate distribution (scale must be positive)");
  }
  if (trials < 10000) {
    throw Error("sign_probability_study: need at least 10^4 trials per grid point");
  }
  if (xi_grid.empty()) throw Error("sign_probability_study: empty grid");
  const double positive_mean = half_normal_scale * std::sqrt(2.0 / 3.14159265358979323846);
  SignProbabilityStudy study;
  for (size_t gi = 0; gi < xi_grid.size(); ++gi) {
    const double xi = xi_grid[gi];
    if (xi < 0.0 || xi >= 1.0 + 1e-12) throw Error("sign_probability_study: xi out of [0, 1)");
    Rng rng = substream(seed, "signprob/" + std::to_string(gi));
    const double threshold = (1.0 - xi) * positive_mean;
    int64_t hits = 0;
    for (int64_t t = 0; t < trials; ++t) {
      const double draw = std::abs(rng.normal(0.0, half_normal_scale));
      if (draw - threshold < 0.0) ++hits;
    }
    const double p = static_cast<double>(hits) / static_cast<double>(trials);
    SignProbabilityRow row;
    row.xi = xi;
    row.probability = p;
    row.std_error = std::sqrt(std::max(p * (1.0 - p), 1e-12) / static_cast<double>(trials));
    study.rows.push_back(row);
  }
  // least-squares slope of probability over xi
  const double n = static_cast<double>(study.rows.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : study.rows) {
    sx += r.xi;
    sy += r.probability;
    sxx += r.xi * r.xi;
    sxy += r.xi * r.probability;
  }
  const double denom = n * sxx - sx * sx;
  study.fitted_slope = denom == 0.0 ? 0.0 : (n * sxy - sx * sy) / denom;
  return study;
}

FreedCount freed_parameter_count(const Tensor& alpha_batch, const Tensor& beta_batch) {
  const auto& as = alpha_batch.shape();
  const auto& bs = beta_batch.shape();
  if (as.size() != 2 || bs.size() != 3 || as[0] != bs[0]) {
    throw Error("freed_parameter_count: expected alpha [B,C] and beta [B,H,W]");
  }
  FreedCount out;
  out.total_cols = as[1];
  out.beta_all_zero = true;
  for (int64_t i = 0; i < beta_batch.numel(); ++i) {
    if (beta_batch.at(i) != 0.0) {
      out.beta_all_zero = false;
      break;
    }
  }
  for (int64_t c = 0; c < as[1]; ++c) {
    bool all_zero = out.beta_all_zero;
    if (all_zero) {
      for (int64_t b = 0; b < as[0]; ++b) {
        if (alpha_batch.at(b * as[1] + c) != 0.0) {
          all_zero = false;
          break;
        }
      }
    }
    if (all_zero) ++out.freed_channels;
  }
  out.valid_rows = out.total_cols - out.freed_channels;
  return out;
}

namespace {

ToyStage random_toy_stage(Rng& rng, bool sparse_coeffs) {
  ToyStage stage;
  stage.channels = 4;
  stage.height = 3;
  stage.width = 5;
  stage.weights = Tensor::empty({4, 4}, DType::F64);
  for (int64_t i = 0; i < stage.weights.numel(); ++i) {
    stage.weights.set(i, rng.normal(0.0, 1.0));
  }
  stage.alpha = Tensor::empty({4}, DType::F64);
  for (int64_t i = 0; i < 4; ++i) {
    const bool zero = sparse_coeffs && rng.uniform() < 0.4;
    stage.alpha.set(i, zero ? 0.0 : rng.uniform(0.1, 1.5));
  }
  stage.beta = Tensor::empty({3, 5}, DType::F64);
  for (int64_t i = 0; i < 15; ++i) {
    const bool zero = sparse_coeffs && rng.uniform() < 0.4;
    stage.beta.set(i, zero ? 0.0 : rng.uniform(0.1, 1.0));
  }
  stage.input = Tensor::empty({4, 3, 5}, DType::F64);
  for (int64_t i = 0; i < stage.input.numel(); ++i) {
    stage.input.set(i, rng.normal(0.0, 1.0));
  }
  return stage;
}

double max_rel(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a.at(i) - b.at(i)) / std::max(1.0, std::abs(b.at(i))));
  }
  return m;
}

CheckReport check_stage_grads(uint64_t seed) {
  CheckReport rep;
  rep.name = "stage_grads_identity_bn";
  Rng rng(seed);
  double worst = 0.0;
  uint64_t digest = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ToyStage stage = random_toy_stage(rng, trial % 2 == 1);
    Tensor upstream = Tensor::empty({4, 3, 5}, DType::F64);
    for (int64_t i = 0; i < upstream.numel(); ++i) upstream.set(i, rng.normal(0.0, 1.0));
    digest ^= stage.weights.digest() ^ upstream.digest();
    const StageGrads closed = analytic_stage_grads(stage, upstream);
    const StageGrads tape = autodiff_stage_grads(stage, upstream);
    worst = std::max(worst, max_rel(closed.grad_weights, tape.grad_weights));
    worst = std::max(worst, max_rel(closed.grad_alpha, tape.grad_alpha));
    worst = std::max(worst, max_rel(closed.grad_beta, tape.grad_beta));
  }
  rep.inputs_digest = digest;
  rep.max_error = worst;
  rep.pass = worst <= 1e-10;
  rep.note = "20 random stages, analytic vs tape";
  return rep;
}

CheckReport check_gate_pattern_under_normalization(uint64_t seed) {
  CheckReport rep;
  rep.name = "freed_columns_with_bn_normalization";
  Rng rng(seed + 1);
  ToyStage stage = random_toy_stage(rng, false);
  stage.bn = ToyStage::Bn::kNormalize;
  // Channels 1 and 3 freed: alpha zero and beta identically zero.
  stage.alpha.set(1, 0.0);
  stage.alpha.set(3, 0.0);
  for (int64_t i = 0; i < stage.beta.numel(); ++i) stage.beta.set(i, 0.0);
  Tensor upstream = Tensor::full({4, 3, 5}, 1.0, DType::F64);
  rep.inputs_digest = stage.weights.digest() ^ upstream.digest();
  const StageGrads tape = autodiff_stage_grads(stage, upstream);
  double freed_mag = 0.0, live_mag = 0.0;
  for (int64_t m = 0; m < 4; ++m) {
    freed_mag = std::max({freed_mag, std::abs(tape.grad_weights.at(m * 4 + 1)),
                          std::abs(tape.grad_weights.at(m * 4 + 3))});
    live_mag = std::max({live_mag, std::abs(tape.grad_weights.at(m * 4 + 0)),
                         std::abs(tape.grad_weights.at(m * 4 + 2))});
  }
  rep.max_error = freed_mag;
  rep.pass = freed_mag == 0.0 && live_mag > 0.0;
  rep.note = "zero-coefficient columns stay zero even with the normalization Jacobian";
  return rep;
}

CheckReport check_mean_decomposition(uint64_t seed) {
  CheckReport rep;
  rep.name = "nonnegative_mean_decomposition";
  Rng rng(seed + 2);
  double worst = 0.0;
  uint64_t digest = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t h = 2 + static_cast<int64_t>(rng.below(7));
    const int64_t w = 2 + static_cast<int64_t>(rng.below(7));
    Tensor map = Tensor::zeros({h, w}, DType::F64);
    for (int64_t i = 0; i < map.numel(); ++i) {
      if (rng.uniform() < 0.6) map.set(i, rng.uniform(0.01, 3.0));
    }
    digest ^= map.digest();
    const auto d = bn_mean_decomposition(map);
    worst = std::max(worst, std::abs(d.subtracted_mean - d.sparse_form));
  }
  rep.inputs_digest = digest;
  rep.max_error = worst;
  rep.pass = worst <= 1e-12;
  rep.note = "1000 random sparse nonnegative maps";
  return rep;
}

CheckReport check_sign_probability(uint64_t seed) {
  CheckReport rep;
  rep.name = "sign_flip_probability_monotone";
  const auto study = sign_probability_study(1.0, {0.0, 0.25, 0.5, 0.75}, 100000, seed + 3);
  bool decreasing = true;
  double min_margin = 1e9;
  for (size_t i = 1; i < study.rows.size(); ++i) {
    const auto& prev = study.rows[i - 1];
    const auto& cur = study.rows[i];
    const double sep = 3.0 * std::sqrt(prev.std_error * prev.std_error +
                                       cur.std_error * cur.std_error);
    const double margin = prev.probability - cur.probability - sep;
    min_margin = std::min(min_margin, margin);
    if (margin <= 0.0) decreasing = false;
  }
  rep.inputs_digest = fnv1a("half-normal scale 1.0");
  rep.max_error = -min_margin;
  rep.pass = decreasing && study.fitted_slope < 0.0;
  std::ostringstream note;
  note << "fitted slope " << study.fitted_slope << "; probabilities";
  for (const auto& r : study.rows) note << " " << r.probability;
  rep.note = note.str();
  return rep;
}

CheckReport check_freed_kernels_end_to_end(uint64_t seed) {
  CheckReport rep;
  rep.name = "freed_kernel_columns_end_to_end";
  models::GeneratorConfig gcfg = models::default_generator_config(
      8, 16, 24, sastm::Mode::kFull, models::Arch::kDcganLike, 1);
  models::Generator gen(gcfg, seed + 4, DType::F64);
  const int64_t batch = 4;
  const int64_t c2 = gcfg.stages[1].channels;  // stage 2 channels
  // Freeze stage 2 coefficients: alpha zero on a chosen channel set, beta
  // identically zero.
  const std::vector<int64_t> freed = {0, 2, 5};
  Tensor alpha = Tensor::full({batch, c2}, 0.7, DType::F64);
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t f : freed) alpha.set(b * c2 + f, 0.0);
  }
  Tensor beta = Tensor::zeros({batch, 8, 8}, DType::F64);
  gen.override_coefficients(2, alpha, beta);

  Rng rng(seed + 5);
  Tensor z = Tensor::empty({batch, 24}, DType::F64);
  for (int64_t i = 0; i < z.numel(); ++i) z.set(i, rng.normal(0.0, 1.0));
  Tape tape;
  auto out = gen.forward(&tape, make_constant(z), nn::BnMode::kTrain, false);
  Variable loss = op::mean_all(&tape, out.image);
  const nn::ParamPtr& w2 = gen.stage_weight(2);
  auto grads = backward(tape, loss, {w2->var});
  const Tensor& gw = grads.at(w2->var.node()).value();  // [C1, C2, 4, 4]

  const auto& ws = gw.shape();
  double freed_mag = 0.0, live_mag = 0.0;
  for (int64_t m = 0; m < ws[0]; ++m) {
    for (int64_t i = 0; i < ws[1]; ++i) {
      const bool is_freed =
          std::find(freed.begin(), freed.end(), i) != freed.end();
      for (int64_t p = 0; p < ws[2] * ws[3]; ++p) {
        const double v = std::abs(gw.at((m * ws[1] + i) * ws[2] * ws[3] + p));
        if (is_freed) {
          freed_mag = std::max(freed_mag, v);
        } else {
          live_mag = std::max(live_mag, v);
        }
      }
    }
  }
  const auto count = freed_parameter_count(alpha, beta);
  rep.inputs_digest = z.digest() ^ alpha.digest();
  rep.max_error = freed_mag;
  rep.pass = freed_mag == 0.0 && live_mag > 0.0 &&
             count.freed_channels == static_cast<int64_t>(freed.size()) &&
             count.valid_rows == c2 - static_cast<int64_t>(freed.size());
  std::ostringstream note;
  note << "valid kernel block " << count.valid_rows << "x" << count.total_cols;
  rep.note = note.str();
  return rep;
}

}  // namespace

std::vector<CheckReport> run_all_checks(uint64_t seed) {
  std::vector<CheckReport> reports;
  reports.push_back(check_stage_grads(seed));
  reports.push_back(check_gate_pattern_under_normalization(seed));
  reports.push_back(check_mean_decomposition(seed));
  reports.push_back(check_sign_probability(seed));
  reports.push_back(check_freed_kernels_end_to_end(seed));
  return reports;
}

void write_check_reports_csv(const std::string& path,
                             const std::vector<CheckReport>& reports) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open for writing: " + path);
  f << "check,inputs_digest,max_error,pass,note\n";
  for (const auto& r : reports) {
    std::string note = r.note;
    for (auto& ch : note) {
      if (ch == ',') ch = ';';
    }
    f << r.name << "," << std::hex << r.inputs_digest << std::dec << "," << r.max_error << ","
      << (r.pass ? "1" : "0") << "," << note << "\n";
  }
}

}  // namespace ssgan::verify
