#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssgan/tensor.hpp"

namespace ssgan::metrics {

struct GaussianStats {
  Tensor mu;     // [d]
  Tensor sigma;  // [d, d], symmetric
};

// Sample mean and unbiased covariance of row-vector features [N, d].
// `shrinkage` > 0 adds shrinkage * mean(diag) to the diagonal, for N close
// to d. Throws for N < 2.
GaussianStats feature_stats(const Tensor& features, double shrinkage = 0.0);

// Frechet distance between two Gaussians. The trace of the cross square
// root is computed through the symmetric form sqrt(S_x^1/2 S_g S_x^1/2);
// eigenvalues below -1e-6 are treated as covariance-estimation bugs,
// anything in (-1e-6, 0) is clamped to zero.
double fid(const GaussianStats& a, const GaussianStats& b);

// Images [N,C,H,W] -> features [N,d] (always f64).
using Extractor = std::function<Tensor(const Tensor&)>;
// "pixel": 8x8 average-pooled flattening. "toycnn": a small fixed-seed
// random convolutional embedder.
Extractor make_extractor(const std::string& name);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

// 100 * (baseline - ours) / baseline; requires a positive baseline.
double relative_fid_decrease(double fid_baseline, double fid_ours);

// Stage-mean of channel-mean sparse rates.
double avg_position_sparsity(const std::vector<Tensor>& per_stage_xi);

// Zero-versus-positive flags per coefficient over evaluation steps.
struct SignHistory {
  std::vector<int64_t> steps;               // strictly increasing
  std::vector<std::vector<uint8_t>> flags;  // flags[t][k], 1 = zero
};

struct SignStability {
  std::vector<int64_t> stable_from;  // earliest step after which the flag is constant
  double stable_fraction = 0.0;      // fraction with stable_from <= burn_in
};

SignStability sign_stability(const SignHistory& history, int64_t burn_in_step);

// Symmetric eigendecomposition (cyclic Jacobi). vecs stores eigenvectors as
// columns.
void sym_eigen(const Tensor& m, std::vector<double>& vals, std::vector<double>& vecs);

// Published sparsity-rate / FID-improvement columns, shipped for the
// `table7` command.
struct CorrelationTable {
  std::vector<double> xi_bar;
  std::vector<double> eta;
};
CorrelationTable builtin_correlation_table_64();
CorrelationTable builtin_correlation_table_128();
// Published (baseline FID, ours FID) pairs across the benchmark grid.
std::vector<std::pair<double, double>> builtin_fid_baseline_pairs();

}  // namespace ssgan::metrics
