#include "ssgan/models.hpp"

#include <cmath>

namespace ssgan::models {

namespace op = ssgan::ops;

const char* arch_name(Arch a) { return a == Arch::kDcganLike ? "dcgan" : "resnet"; }

Arch arch_from_string(const std::string& s) {
  if (s == "dcgan") return Arch::kDcganLike;
  if (s == "resnet") return Arch::kResnetLike;
  throw Error("unknown architecture '" + s + "' (dcgan|resnet)");
}

GeneratorConfig default_generator_config(int64_t resolution, int64_t base_channels,
                                         int64_t latent_dim, sastm::Mode mode, Arch arch,
                                         int64_t out_channels) {
  GeneratorConfig cfg;
  cfg.latent_dim = latent_dim;
  cfg.mode = mode;
  cfg.arch = arch;
  cfg.out_channels = out_channels;
  int64_t size = 4;
  int64_t ch = base_channels;
  while (true) {
    cfg.stages.push_back({std::max<int64_t>(ch, 8), size, size});
    if (size == resolution) break;
    if (size > resolution) {
      throw Error("resolution " + std::to_string(resolution) + " is not 4*2^k");
    }
    size *= 2;
    ch /= 2;
  }
  validate_config(cfg);
  return cfg;
}

void validate_config(const GeneratorConfig& cfg) {
  if (cfg.stages.empty()) throw Error("generator config: no stages");
  if (cfg.latent_dim < 1) throw Error("generator config: latent_dim must be positive");
  if (cfg.out_channels < 1) throw Error("generator config: out_channels must be positive");
  const auto& first = cfg.stages.front();
  if (first.height != 4 || first.width != 4) {
    throw Error("generator config: stage 1 must be 4x4, got " + std::to_string(first.height) +
                "x" + std::to_string(first.width));
  }
  for (size_t t = 1; t < cfg.stages.size(); ++t) {
    const auto& prev = cfg.stages[t - 1];
    const auto& cur = cfg.stages[t];
    if (cur.height != 2 * prev.height || cur.width != 2 * prev.width) {
      throw Error("generator config: stage " + std::to_string(t + 1) +
                  " must double the extents of stage " + std::to_string(t));
    }
  }
  for (const auto& s : cfg.stages) {
    if (s.channels < 1) throw Error("generator config: non-positive channel count");
    if (cfg.mode != sastm::Mode::kOff && s.height * s.width > 16384) {
      throw Error("generator config: position head capped at 16384 sites, stage has " +
                  std::to_string(s.height * s.width));
    }
  }
}

Generator::Generator(GeneratorConfig cfg, uint64_t seed, DType dt)
    : cfg_(std::move(cfg)), dtype_(dt) {
  validate_config(cfg_);
  const int64_t T = static_cast<int64_t>(cfg_.stages.size());
  overrides_.resize(static_cast<size_t>(T));
  const auto& s1 = cfg_.stages[0];
  project_ = nn::Linear(params_, "g.stage1.project", cfg_.latent_dim,
                        s1.channels * s1.height * s1.width, seed, dt);
  for (int64_t t = 2; t <= T; ++t) {
    const auto& prev = cfg_.stages[static_cast<size_t>(t - 2)];
    const auto& cur = cfg_.stages[static_cast<size_t>(t - 1)];
    const std::string base = "g.stage" + std::to_string(t);
    if (cfg_.arch == Arch::kDcganLike) {
      deconvs_.emplace_back(params_, base + ".deconv", prev.channels, cur.channels, 4, 2, 1,
                            seed, dt);
    } else {
      stage_convs_.emplace_back(params_, base + ".conv", prev.channels, cur.channels, 3, 1, 1,
                                seed, dt);
      ResBlock block;
      block.conv_a = nn::Conv2d(params_, base + ".res.a", cur.channels, cur.channels, 3, 1, 1,
                                seed, dt);
      block.conv_b = nn::Conv2d(params_, base + ".res.b", cur.channels, cur.channels, 3, 1, 1,
                                seed, dt);
      block.bn = nn::BatchNorm2d(params_, base + ".res.bn", cur.channels, cfg_.bn_eps,
                                 cfg_.bn_momentum, cfg_.bn_affine, dt);
      resblocks_.push_back(std::move(block));
    }
  }
  for (int64_t t = 1; t <= T; ++t) {
    const auto& cur = cfg_.stages[static_cast<size_t>(t - 1)];
    const std::string base = "g.stage" + std::to_string(t);
    bns_.emplace_back(params_, base + ".bn", cur.channels, cfg_.bn_eps, cfg_.bn_momentum,
                      cfg_.bn_affine, dt);
    if (cfg_.mode != sastm::Mode::kOff) {
      stage_nets_.emplace_back(params_, base + ".sastm", cfg_.latent_dim, cfg_.trunk_width,
                               cur.channels, cur.height, cur.width, cfg_.mode,
                               cfg_.share_beta_2x2, seed, dt);
    }
  }
  const auto& last = cfg_.stages.back();
  head_ = nn::Conv2d(params_, "g.head", last.channels, cfg_.out_channels, 3, 1, 1, seed, dt);
}

void Generator::override_coefficients(int64_t stage, std::optional<Tensor> alpha,
                                      std::optional<Tensor> beta) {
  if (stage < 1 || stage > stage_count()) throw Error("override_coefficients: bad stage");
  overrides_[static_cast<size_t>(stage - 1)] = {std::move(alpha), std::move(beta)};
}

void Generator::clear_overrides() {
  for (auto& o : overrides_) o = {std::nullopt, std::nullopt};
}

GeneratorOutput Generator::forward(Tape* tape, const Variable& z, nn::BnMode bn_mode,
                                   bool want_trace) {
  if (z.shape().size() != 2 || z.shape()[1] != cfg_.latent_dim) {
    throw Error("generator: latent batch " + shape_str(z.shape()) + " does not match width " +
                std::to_string(cfg_.latent_dim));
  }
  if (!z.value().all_finite()) throw Error("generator: non-finite latent input");
  const int64_t T = stage_count();
  const int64_t batch = z.shape()[0];
  GeneratorOutput out;
  Variable y;
  for (int64_t t = 1; t <= T; ++t) {
    const auto& spec = cfg_.stages[static_cast<size_t>(t - 1)];
    Variable h;
    if (t == 1) {
      h = op::reshape(tape, project_.forward(tape, z),
                      {batch, spec.channels, spec.height, spec.width});
    } else if (cfg_.arch == Arch::kDcganLike) {
      h = deconvs_[static_cast<size_t>(t - 2)].forward(tape, y);
    } else {
      h = stage_convs_[static_cast<size_t>(t - 2)].forward(tape, op::upsample2x(tape, y));
    }
    StageTrace trace;
    trace.h = h;
    Variable x = h;
    if (cfg_.mode != sastm::Mode::kOff) {
      sastm::Coefficients coeffs =
          stage_nets_[static_cast<size_t>(t - 1)].coefficients(tape, z);
      const auto& ov = overrides_[static_cast<size_t>(t - 1)];
      if (ov.first.has_value()) coeffs.alpha = make_constant(ov.first->clone());
      if (ov.second.has_value()) coeffs.beta = make_constant(ov.second->clone());
      x = sastm::recombine(tape, h, coeffs);
      trace.alpha = coeffs.alpha;
      trace.beta = coeffs.beta;
    }
    trace.x = x;
    Variable s = bns_[static_cast<size_t>(t - 1)].forward(tape, x, bn_mode);
    trace.s = s;
    y = op::relu(tape, s);
    if (cfg_.arch == Arch::kResnetLike && t >= 2) {
      ResBlock& block = resblocks_[static_cast<size_t>(t - 2)];
      Variable inner =
          block.conv_a.forward(tape, y);
      inner = op::relu(tape, block.bn.forward(tape, inner, bn_mode));
      y = op::add(tape, y, block.conv_b.forward(tape, inner));
    }
    trace.y = y;
    if (want_trace) out.stages.push_back(std::move(trace));
  }
  out.image = op::tanh(tape, head_.forward(tape, y));
  return out;
}

Tensor Generator::sample(const Tensor& z, nn::BnMode bn_mode) {
  return forward(nullptr, make_constant(z), bn_mode, false).image.value();
}

const nn::ParamPtr& Generator::stage_weight(int64_t stage) const {
  if (stage < 1 || stage > stage_count()) throw Error("stage_weight: bad stage");
  if (stage == 1) return project_.w;
  if (cfg_.arch == Arch::kDcganLike) return deconvs_[static_cast<size_t>(stage - 2)].w;
  return stage_convs_[static_cast<size_t>(stage - 2)].w;
}

std::vector<double> Generator::negative_weight_fraction() const {
  std::vector<double> fractions;
  for (int64_t t = 1; t <= stage_count(); ++t) {
    const Tensor& w = stage_weight(t)->var.value();
    int64_t neg = 0;
    for (int64_t i = 0; i < w.numel(); ++i) {
      if (w.at(i) < 0) ++neg;
    }
    fractions.push_back(static_cast<double>(neg) / static_cast<double>(w.numel()));
  }
  return fractions;
}

std::vector<std::pair<std::string, Tensor>> Generator::buffers() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t i = 0; i < bns_.size(); ++i) {
    const std::string base = "g.stage" + std::to_string(i + 1) + ".bn.";
    out.emplace_back(base + "running_mean", bns_[i].running_mean.clone());
    out.emplace_back(base + "running_var", bns_[i].running_var.clone());
  }
  for (size_t i = 0; i < resblocks_.size(); ++i) {
    const std::string base = "g.stage" + std::to_string(i + 2) + ".res.bn.";
    out.emplace_back(base + "running_mean", resblocks_[i].bn.running_mean.clone());
    out.emplace_back(base + "running_var", resblocks_[i].bn.running_var.clone());
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Generator::buffer_slots() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (size_t i = 0; i < bns_.size(); ++i) {
    const std::string base = "g.stage" + std::to_string(i + 1) + ".bn.";
    out.emplace_back(base + "running_mean", &bns_[i].running_mean);
    out.emplace_back(base + "running_var", &bns_[i].running_var);
  }
  for (size_t i = 0; i < resblocks_.size(); ++i) {
    const std::string base = "g.stage" + std::to_string(i + 2) + ".res.bn.";
    out.emplace_back(base + "running_mean", &resblocks_[i].bn.running_mean);
    out.emplace_back(base + "running_var", &resblocks_[i].bn.running_var);
  }
  return out;
}

void Generator::restore_buffers(const std::vector<std::pair<std::string, Tensor>>& buffers) {
  auto slots = buffer_slots();
  for (auto& [name, dst] : slots) {
    bool found = false;
    for (const auto& [n, t] : buffers) {
      if (n == name) {
        *dst = t.clone();
        found = true;
        break;
      }
    }
    if (!found) throw Error("missing buffer " + name);
  }
}

Critic::Critic(CriticConfig cfg, uint64_t seed, DType dt) : cfg_(std::move(cfg)), dtype_(dt) {
  if (cfg_.resolution < 8) throw Error("critic: resolution below 8");
  int64_t size = cfg_.resolution;
  int64_t cin = cfg_.in_channels;
  int64_t width = cfg_.base_width;
  int64_t idx = 0;
  while (size > 4) {
    const std::string base = "d.block" + std::to_string(++idx);
    if (cfg_.arch == Arch::kDcganLike) {
      convs_.emplace_back(params_, base + ".conv", cin, width, 4, 2, 1, seed, dt);
    } else {
      convs_.emplace_back(params_, base + ".conv", cin, width, 3, 1, 1, seed, dt);
      res_a_.emplace_back(params_, base + ".res.a", width, width, 3, 1, 1, seed, dt);
      res_b_.emplace_back(params_, base + ".res.b", width, width, 3, 1, 1, seed, dt);
    }
    cin = width;
    width *= 2;
    size /= 2;
  }
  fc_ = nn::Linear(params_, "d.fc", cin * size * size, 1, seed, dt);
}

Variable Critic::forward(Tape* tape, const Variable& images) {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != cfg_.in_channels || s[2] != cfg_.resolution ||
      s[3] != cfg_.resolution) {
    throw Error("critic: images " + shape_str(s) + " do not match " +
                std::to_string(cfg_.in_channels) + "x" + std::to_string(cfg_.resolution) + "x" +
                std::to_string(cfg_.resolution));
  }
  Variable h = images;
  for (size_t i = 0; i < convs_.size(); ++i) {
    if (cfg_.arch == Arch::kDcganLike) {
      h = op::leaky_relu(tape, convs_[i].forward(tape, h), cfg_.leaky_slope);
    } else {
      h = convs_[i].forward(tape, h);
      Variable inner = res_b_[i].forward(
          tape, op::leaky_relu(tape, res_a_[i].forward(tape, h), cfg_.leaky_slope));
      h = op::leaky_relu(tape, op::add(tape, h, inner), cfg_.leaky_slope);
      // halve the extents with a 2x2 average
      h = op::mul_scalar(tape, op::downsample2x_sum(tape, h), 0.25);
    }
  }
  const auto& hs = h.shape();
  Variable flat = op::reshape(tape, h, {hs[0], hs[1] * hs[2] * hs[3]});
  Variable score = fc_.forward(tape, flat);
  return op::reshape(tape, score, {hs[0]});
}

}  // namespace ssgan::models
