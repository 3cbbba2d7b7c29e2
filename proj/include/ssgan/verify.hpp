#pragma once

#include <string>
#include <vector>

#include "ssgan/tensor.hpp"

namespace ssgan::verify {

// Single-sample generation stage with a 1x1 channel-mixing kernel:
// maps x[i,j,k] = (alpha[i] + beta[j,k]) * sum_m weights[m,i] * input[m,j,k],
// then BN (identity or train-style normalization) and ReLU.
struct ToyStage {
  enum class Bn { kIdentity, kNormalize };
  int64_t channels = 0, height = 0, width = 0;
  Tensor weights;  // [C, C], weights[m][i] mixes input channel m into output i
  Tensor alpha;    // [C]
  Tensor beta;     // [H, W]
  Tensor input;    // [C, H, W]
  Bn bn = Bn::kIdentity;
};

struct StageGrads {
  Tensor grad_weights;  // [C, C]
  Tensor grad_alpha;    // [C]
  Tensor grad_beta;     // [H, W]
};

// Closed-form stage adjoints with the post-activation gate applied; valid
// only with identity BN (the normalization Jacobian is not part of the
// closed form), so normalize mode is refused.
StageGrads analytic_stage_grads(const ToyStage& stage, const Tensor& upstream);
// The same quantities through the tape, any BN mode.
StageGrads autodiff_stage_grads(const ToyStage& stage, const Tensor& upstream);

struct MeanDecomposition {
  double subtracted_mean = 0.0;   // plain channel mean
  double sparse_form = 0.0;       // (1 - xi) * mean of strictly positive entries
  double xi = 0.0;
  double positive_mean = 0.0;
};

// For a nonnegative map, the subtracted BN mean equals
// (1 - zero_fraction) * positive_mean exactly; negative entries are a
// precondition violation.
MeanDecomposition bn_mean_decomposition(const Tensor& channel_map);

struct SignProbabilityRow {
  double xi = 0.0;
  double probability = 0.0;  // P(value - (1-xi)*mean < 0) for positive draws
  double std_error = 0.0;
};

struct SignProbabilityStudy {
  std::vector<SignProbabilityRow> rows;
  double fitted_slope = 0.0;  // least-squares trend of probability over xi
};

// Monte Carlo estimate of how mean subtraction flips positive entries
// negative, as position sparsity grows. Requires >= 10^4 trials per point
// and a non-degenerate scale.
SignProbabilityStudy sign_probability_study(double half_normal_scale,
                                            const std::vector<double>& xi_grid, int64_t trials,
                                            uint64_t seed);

struct FreedCount {
  int64_t freed_channels = 0;  // channels whose alpha is zero for every sample
  int64_t valid_rows = 0;      // C - freed
  int64_t total_cols = 0;      // C
  bool beta_all_zero = false;
};

// alpha_batch [B, C], beta_batch [B, H, W]. Freed channels are counted only
// against an all-zero beta; the valid kernel block is (C - freed) x C.
FreedCount freed_parameter_count(const Tensor& alpha_batch, const Tensor& beta_batch);

struct CheckReport {
  std::string name;
  uint64_t inputs_digest = 0;
  double max_error = 0.0;
  bool pass = false;
  std::string note;
};

// Every mechanism check with fresh random inputs; used by `verify`.
std::vector<CheckReport> run_all_checks(uint64_t seed);
void write_check_reports_csv(const std::string& path, const std::vector<CheckReport>& reports);

}  // namespace ssgan::verify
