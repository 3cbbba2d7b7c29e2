#pragma once

#include <optional>

#include "ssgan/nn.hpp"

namespace ssgan::sastm {

enum class Mode { kFull, kWithoutPsm, kWithoutCsm, kOff };

const char* mode_name(Mode m);
Mode mode_from_string(const std::string& s);

// Per-sample channel coefficients and position coefficients for one stage.
// Both are outputs of ReLU heads, hence nonnegative by construction.
struct Coefficients {
  Variable alpha;  // [B, C]
  Variable beta;   // [B, H, W]
};

// Two-headed transform of the latent vector: a shared trunk feeds a channel
// head (C outputs) and a position head (H*W outputs). A disabled head
// (ablation) emits exact zeros and owns no parameters.
class StageNet {
 public:
  StageNet() = default;
  StageNet(nn::ParamStore& store, const std::string& name, int64_t latent_dim,
           int64_t trunk_width, int64_t channels, int64_t height, int64_t width, Mode mode,
           bool share_beta_2x2, uint64_t seed, DType dt);

  Coefficients coefficients(Tape* tape, const Variable& z) const;

  int64_t channels() const { return channels_; }
  int64_t height() const { return height_; }
  int64_t width() const { return width_; }
  Mode mode() const { return mode_; }

 private:
  nn::Linear trunk_;
  nn::Linear channel_head_;
  nn::Linear position_head_;
  int64_t channels_ = 0, height_ = 0, width_ = 0;
  Mode mode_ = Mode::kFull;
  bool share_beta_2x2_ = false;
};

// x[b,i,j,k] = (alpha[b,i] + beta[b,j,k]) * h[b,i,j,k]
Variable recombine(Tape* tape, const Variable& h, const Coefficients& coeffs);

struct SparsityStats {
  Tensor xi;   // [C]: per-channel fraction of (near-)zero entries, batch-averaged
  double zeta = 0.0;  // fraction of channels with xi >= 2/3
  double zero_threshold = 0.0;
};

// The 2/3 channel-sparsity cutoff.
inline constexpr double kSparseChannelCutoff = 2.0 / 3.0;

SparsityStats sparsity_stats(const Tensor& x, double zero_threshold);

struct AnalyticGrads {
  Tensor grad_h;      // upstream * (alpha + beta)
  Tensor grad_alpha;  // [B, C]: sum over positions of upstream * h
  Tensor grad_beta;   // [B, H, W]: sum over channels of upstream * h
};

// Closed-form adjoints of recombine, for cross-checking the tape.
AnalyticGrads analytic_recombine_grads(const Tensor& upstream, const Tensor& h,
                                       const Tensor& alpha, const Tensor& beta);

}  // namespace ssgan::sastm
