#pragma once

#include <iosfwd>
#include <optional>

#include "ssgan/config.hpp"
#include "ssgan/data.hpp"
#include "ssgan/metrics.hpp"
#include "ssgan/models.hpp"

namespace ssgan::train {

struct StepLosses {
  int64_t step = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double gp = 0.0;
};

struct EvalRecord {
  int64_t step = 0;
  double fid = 0.0;
  double xi_bar = 0.0;
  std::vector<double> zeta_per_stage;
  std::vector<double> negw_per_stage;
  double sign_stable_fraction = 0.0;
  int64_t eval_samples = 0;
};

struct RunLog {
  std::vector<StepLosses> losses;
  std::vector<EvalRecord> evals;
};

// xhat = eps * real + (1 - eps) * fake, eps ~ U[0,1) per sample.
Tensor interpolate_samples(const Tensor& real, const Tensor& fake, Rng& rng);

struct CriticLoss {
  Variable total;    // E[D(fake)] - E[D(real)] + lambda * penalty
  Variable penalty;  // E[ || d D(xhat) / d xhat ||^2 ], zero-centered
  double wasserstein = 0.0;
};

// Builds the critic objective on `tape`, including the recorded gradient of
// the interpolated scores so the penalty stays differentiable with respect
// to the critic parameters.
CriticLoss critic_loss(Tape& tape, models::Critic& critic, const Tensor& real,
                       const Tensor& fake, double lambda, Rng& eps_rng);

struct TrainOutcome {
  bool aborted = false;
  std::string abort_reason;
  int64_t completed_steps = 0;
  double final_fid = 0.0;
  RunLog log;
  std::string out_dir;
};

struct TrainOptions {
  std::optional<std::string> resume_checkpoint;
  std::ostream* progress = nullptr;  // optional human-readable progress lines
};

// Full run: alternating critic/generator updates, periodic evaluation
// (FID, sparsity, coefficient dumps, sign tracking), checkpoints, CSV log.
// Writes runlog.csv, coeffs/, checkpoints/, samples/, summary.json under
// config.out_dir. Deterministic for a fixed config and seed.
TrainOutcome run_training(const cfg::RunConfig& config, const TrainOptions& options = {});

}  // namespace ssgan::train
