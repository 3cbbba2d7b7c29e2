#pragma once

#include <string>

#include "ssgan/common.hpp"

namespace ssgan::cfg {

// Flat key=value run configuration with [run]/[data]/[model]/[train]
// sections. Unknown keys are errors; serialization emits a canonical order
// so parse -> serialize -> parse is the identity.
struct RunConfig {
  // [run]
  uint64_t seed = 1;
  std::string out_dir = "runs/out";
  std::string precision = "f64";  // f32|f64

  // [data]
  std::string dataset = "synthetic:gaussians";  // path to .idx or synthetic:<kind>
  int64_t resolution = 32;
  int64_t channels = 1;
  int64_t dataset_size = 2000;  // synthetic kinds only
  int64_t eval_samples = 5000;
  std::string fid_extractor = "pixel";  // pixel|toycnn

  // [model]
  std::string arch = "dcgan";  // dcgan|resnet
  int64_t latent_dim = 128;
  int64_t base_channels = 64;
  std::string sastm = "full";  // full|without-psm|without-csm|off
  int64_t trunk_width = 128;
  double zero_threshold = 0.0;
  bool share_beta_2x2 = false;
  int64_t critic_base_width = 64;

  // [train]
  double lr_g = 1e-4;
  double lr_d = 3e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t d_steps_per_g = 2;
  double gp_lambda = 10.0;
  int64_t batch_size = 64;
  int64_t steps = 2000;
  int64_t eval_every = 500;
  int64_t probe_batch = 16;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);
void validate_config(const RunConfig& cfg);

}  // namespace ssgan::cfg
