#pragma once

#include <optional>

#include "ssgan/sastm.hpp"

namespace ssgan::models {

enum class Arch { kDcganLike, kResnetLike };

const char* arch_name(Arch a);
Arch arch_from_string(const std::string& s);

struct StageSpec {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;
};

struct GeneratorConfig {
  int64_t latent_dim = 128;
  std::vector<StageSpec> stages;  // stage 1 is the 4x4 projection
  sastm::Mode mode = sastm::Mode::kFull;
  Arch arch = Arch::kDcganLike;
  int64_t out_channels = 1;
  int64_t trunk_width = 128;
  bool share_beta_2x2 = false;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  bool bn_affine = true;
};

// Stage extents double from 4x4 up to the target resolution; channel widths
// halve from `base_channels`, floored at 8.
GeneratorConfig default_generator_config(int64_t resolution, int64_t base_channels,
                                         int64_t latent_dim, sastm::Mode mode, Arch arch,
                                         int64_t out_channels);
void validate_config(const GeneratorConfig& cfg);

// Intermediate tensors of one stage: post-deconvolution maps h, recombined
// maps x, normalized maps s, activated maps y, plus the coefficients used.
struct StageTrace {
  Variable h, x, s, y;
  Variable alpha, beta;  // undefined when the stage runs without recombination
};

struct GeneratorOutput {
  Variable image;  // [B, out_channels, R, R] in [-1, 1]
  std::vector<StageTrace> stages;
};

class Generator {
 public:
  Generator(GeneratorConfig cfg, uint64_t seed, DType dt);

  GeneratorOutput forward(Tape* tape, const Variable& z, nn::BnMode bn_mode,
                          bool want_trace = false);
  // Convenience sampling path with no recording.
  Tensor sample(const Tensor& z, nn::BnMode bn_mode = nn::BnMode::kBatchStats);

  const GeneratorConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  int64_t stage_count() const { return static_cast<int64_t>(cfg_.stages.size()); }
  DType dtype() const { return dtype_; }

  // Replaces the emitted coefficients of one stage (1-based) with constants;
  // used by ablation checks and equivalence tests.
  void override_coefficients(int64_t stage, std::optional<Tensor> alpha,
                             std::optional<Tensor> beta);
  void clear_overrides();

  // The stage's weight tensor whose columns feed output channels: the
  // projection matrix for stage 1, the deconvolution (or stage conv) kernel
  // otherwise.
  const nn::ParamPtr& stage_weight(int64_t stage) const;
  // Fraction of negative entries in each stage weight.
  std::vector<double> negative_weight_fraction() const;

  std::vector<std::pair<std::string, Tensor>> buffers() const;
  void restore_buffers(const std::vector<std::pair<std::string, Tensor>>& buffers);
  std::vector<std::pair<std::string, Tensor*>> buffer_slots();

 private:
  struct ResBlock {
    nn::Conv2d conv_a, conv_b;
    nn::BatchNorm2d bn;
  };

  GeneratorConfig cfg_;
  DType dtype_ = DType::F64;
  nn::ParamStore params_;
  nn::Linear project_;                        // z -> C1*4*4
  std::vector<nn::ConvTranspose2d> deconvs_;  // stages 2..T (dcgan)
  std::vector<nn::Conv2d> stage_convs_;       // stages 2..T (resnet, after upsample)
  std::vector<ResBlock> resblocks_;           // stages 2..T (resnet)
  std::vector<nn::BatchNorm2d> bns_;          // one per stage
  std::vector<sastm::StageNet> stage_nets_;   // one per stage unless mode off
  nn::Conv2d head_;                           // 3x3 same-size to out_channels
  std::vector<std::pair<std::optional<Tensor>, std::optional<Tensor>>> overrides_;
};

struct CriticConfig {
  int64_t in_channels = 1;
  int64_t resolution = 32;
  int64_t base_width = 64;
  Arch arch = Arch::kDcganLike;
  double leaky_slope = 0.2;
};

// Wasserstein critic: strided convolutions, leaky activations, no
// normalization, unbounded scalar score per sample.
class Critic {
 public:
  Critic(CriticConfig cfg, uint64_t seed, DType dt);

  Variable forward(Tape* tape, const Variable& images);

  const CriticConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

 private:
  CriticConfig cfg_;
  DType dtype_ = DType::F64;
  nn::ParamStore params_;
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::Conv2d> res_a_, res_b_;  // resnet blocks
  nn::Linear fc_;
};

}  // namespace ssgan::models
