#include "ssgan/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ssgan/nn.hpp"
#include "ssgan/ops.hpp"
#include "ssgan/pngio.hpp"
#include "ssgan/sastm.hpp"

namespace ssgan::train {

namespace op = ssgan::ops;
namespace fs = std::filesystem;

Tensor interpolate_samples(const Tensor& real, const Tensor& fake, Rng& rng) {
  if (real.shape() != fake.shape()) {
    throw Error("interpolate_samples: shape mismatch " + shape_str(real.shape()) + " vs " +
                shape_str(fake.shape()));
  }
  const int64_t b = real.shape()[0];
  const int64_t per = real.numel() / b;
  Tensor out = Tensor::empty(real.shape(), real.dtype());
  for (int64_t i = 0; i < b; ++i) {
    const double eps = rng.uniform();
    for (int64_t j = 0; j < per; ++j) {
      const int64_t idx = i * per + j;
      out.set(idx, eps * real.at(idx) + (1.0 - eps) * fake.at(idx));
    }
  }
  return out;
}

CriticLoss critic_loss(Tape& tape, models::Critic& critic, const Tensor& real,
                       const Tensor& fake, double lambda, Rng& eps_rng) {
  Variable scores_real = critic.forward(&tape, make_constant(real));
  Variable scores_fake = critic.forward(&tape, make_constant(fake));

  Variable xhat = make_leaf(interpolate_samples(real, fake, eps_rng));
  Variable scores_mid = critic.forward(&tape, xhat);
  Variable score_sum = op::sum_all(&tape, scores_mid);
  auto grad = backward(tape, score_sum, {xhat});
  Variable gmap = grad.at(xhat.node());
  Variable per_sample = op::sum_axes(&tape, op::square(&tape, gmap), {1, 2, 3}, false);

  CriticLoss out;
  out.penalty = op::mean_all(&tape, per_sample);
  Variable mean_real = op::mean_all(&tape, scores_real);
  Variable mean_fake = op::mean_all(&tape, scores_fake);
  out.total = op::add(&tape, op::sub(&tape, mean_fake, mean_real),
                      op::mul_scalar(&tape, out.penalty, lambda));
  out.wasserstein = mean_real.value().item() - mean_fake.value().item();
  return out;
}

namespace {

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

Tensor randn(Rng& rng, std::vector<int64_t> shape, DType dt) {
  Tensor t = Tensor::empty(std::move(shape), dt);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(0.0, 1.0));
  return t;
}

Tensor sample_batch(const Tensor& images, Rng& rng, int64_t batch) {
  const auto& s = images.shape();
  const int64_t n = s[0];
  const int64_t per = images.numel() / n;
  Tensor out = Tensor::empty({batch, s[1], s[2], s[3]}, images.dtype());
  dispatch(images.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* src = images.data<T>().data();
    T* dst = out.mut<T>().data();
    for (int64_t i = 0; i < batch; ++i) {
      const int64_t idx = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
      std::copy(src + idx * per, src + (idx + 1) * per, dst + i * per);
    }
  });
  return out;
}

void save_run_checkpoint(const std::string& path, models::Generator& gen,
                         models::Critic& critic, int64_t step) {
  nn::Snapshot snap = nn::snapshot_params(gen.params(), gen.buffers(), step);
  nn::Snapshot snap_d = nn::snapshot_params(critic.params(), {}, step);
  for (auto& e : snap_d.entries) snap.entries.push_back(std::move(e));
  for (auto& [k, v] : snap_d.steps) snap.steps[k] = v;
  nn::write_snapshot(path, snap);
}

void load_run_checkpoint(const std::string& path, models::Generator& gen,
                         models::Critic& critic, int64_t* step) {
  nn::Snapshot snap = nn::read_snapshot(path);
  nn::restore_params(gen.params(), gen.buffer_slots(), snap);
  nn::restore_params(critic.params(), {}, snap);
  *step = snap.global_step;
}

std::string step_name(int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step-%06lld", static_cast<long long>(step));
  return buf;
}

struct AbortSignal {
  std::string reason;
};

}  // namespace

TrainOutcome run_training(const cfg::RunConfig& config, const TrainOptions& options) {
  cfg::validate_config(config);
  set_default_dtype(config.precision == "f32" ? DType::F32 : DType::F64);
  const DType dt = default_dtype();
  auto progress = [&](const std::string& msg) {
    if (options.progress != nullptr) (*options.progress) << msg << "\n" << std::flush;
  };

  // data
  data::Dataset dataset;
  if (config.dataset.rfind("synthetic:", 0) == 0) {
    dataset = data::synthetic_dataset(config.dataset.substr(10), config.dataset_size,
                                      config.resolution, config.seed, dt);
  } else {
    dataset = data::load_idx(config.dataset, config.resolution, dt);
  }
  const auto& dshape = dataset.images.shape();
  if (dshape[1] != config.channels) {
    throw Error("dataset has " + std::to_string(dshape[1]) + " channels, config says " +
                std::to_string(config.channels));
  }
  if (dshape[0] < config.batch_size) {
    throw Error("dataset smaller than one batch (" + std::to_string(dshape[0]) + " < " +
                std::to_string(config.batch_size) + ")");
  }

  // models
  models::GeneratorConfig gcfg = models::default_generator_config(
      config.resolution, config.base_channels, config.latent_dim,
      sastm::mode_from_string(config.sastm), models::arch_from_string(config.arch),
      config.channels);
  gcfg.trunk_width = config.trunk_width;
  gcfg.share_beta_2x2 = config.share_beta_2x2;
  models::Generator gen(gcfg, config.seed, dt);
  models::CriticConfig dcfg;
  dcfg.in_channels = config.channels;
  dcfg.resolution = config.resolution;
  dcfg.base_width = config.critic_base_width;
  dcfg.arch = models::arch_from_string(config.arch);
  models::Critic critic(dcfg, config.seed, dt);
  const int64_t T = gen.stage_count();

  // output layout
  const fs::path out_dir(config.out_dir);
  fs::create_directories(out_dir / "coeffs");
  fs::create_directories(out_dir / "checkpoints");
  fs::create_directories(out_dir / "samples");

  int64_t start_step = 0;
  const bool resuming = options.resume_checkpoint.has_value();
  if (resuming) {
    load_run_checkpoint(*options.resume_checkpoint, gen, critic, &start_step);
    progress("warning: resumed from " + *options.resume_checkpoint + " at step " +
             std::to_string(start_step) +
             "; determinism is preserved only from the resume point");
  }

  std::ofstream runlog(out_dir / "runlog.csv",
                       resuming ? std::ios::app : std::ios::trunc);
  std::ofstream sparsity_csv(out_dir / "coeffs" / "sparsity.csv",
                             resuming ? std::ios::app : std::ios::trunc);
  if (!runlog || !sparsity_csv) throw Error("cannot open log files under " + config.out_dir);
  if (!resuming) {
    runlog << "step,loss_d,loss_g,gp,fid,xi_bar,sign_stable,eval_samples";
    for (int64_t t = 1; t <= T; ++t) runlog << ",zeta_s" << t;
    for (int64_t t = 1; t <= T; ++t) runlog << ",negw_s" << t;
    runlog << "\n";
    sparsity_csv << "step,stage,channel,xi,zeta\n";
  }

  // derived streams; resume mixes in the start step so the continued run is
  // self-consistent without replaying the original history
  const uint64_t stream_seed = config.seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(start_step));
  Rng data_rng = substream(stream_seed, "data");
  Rng latent_rng = substream(stream_seed, "latent");
  Rng interp_rng = substream(stream_seed, "interp");
  Rng probe_rng = substream(config.seed, "probe");
  const Tensor z_probe = randn(probe_rng, {config.probe_batch, config.latent_dim}, dt);

  metrics::Extractor extractor = metrics::make_extractor(config.fid_extractor);
  const metrics::GaussianStats real_stats = metrics::feature_stats(extractor(dataset.images));

  nn::AdamConfig adam_d{config.lr_d, config.adam_beta1, config.adam_beta2, config.adam_eps};
  nn::AdamConfig adam_g{config.lr_g, config.adam_beta1, config.adam_beta2, config.adam_eps};

  TrainOutcome outcome;
  outcome.out_dir = config.out_dir;
  metrics::SignHistory sign_history;
  const int64_t burn_in = config.steps / 4;
  const bool sastm_active = gcfg.mode != sastm::Mode::kOff;

  if (!resuming) {
    save_run_checkpoint((out_dir / "checkpoints" / (step_name(0) + ".ssgt")).string(), gen,
                        critic, 0);
  }

  auto evaluate = [&](int64_t step, EvalRecord& rec) {
    rec.step = step;
    rec.eval_samples = config.eval_samples;
    // FID over freshly generated samples
    Rng eval_rng = substream(config.seed, "eval/" + std::to_string(step));
    Tensor features;
    int64_t done = 0;
    while (done < config.eval_samples) {
      const int64_t b = std::min(config.batch_size, config.eval_samples - done);
      Tensor z = randn(eval_rng, {b, config.latent_dim}, dt);
      Tensor imgs = gen.sample(z, nn::BnMode::kBatchStats);
      Tensor feats = extractor(imgs);
      if (done == 0) {
        features = Tensor::zeros({config.eval_samples, feats.shape()[1]}, DType::F64);
      }
      const int64_t d = feats.shape()[1];
      for (int64_t i = 0; i < b; ++i) {
        for (int64_t j = 0; j < d; ++j) features.set((done + i) * d + j, feats.at(i * d + j));
      }
      done += b;
    }
    rec.fid = metrics::fid(real_stats, metrics::feature_stats(features));

    // sparsity and coefficient dumps from the fixed probe batch
    auto probe_out = gen.forward(nullptr, make_constant(z_probe), nn::BnMode::kBatchStats, true);
    std::vector<Tensor> xi_list;
    std::vector<uint8_t> flags;
    for (int64_t t = 0; t < T; ++t) {
      const auto& trace = probe_out.stages[static_cast<size_t>(t)];
      const auto stats = sastm::sparsity_stats(trace.x.value(), config.zero_threshold);
      xi_list.push_back(stats.xi);
      rec.zeta_per_stage.push_back(stats.zeta);
      for (int64_t c = 0; c < stats.xi.numel(); ++c) {
        sparsity_csv << step << "," << (t + 1) << "," << c << "," << fmt_num(stats.xi.at(c))
                     << "," << fmt_num(stats.zeta) << "\n";
      }
      if (sastm_active) {
        const std::string base =
            (out_dir / "coeffs" / (step_name(step) + "-stage" + std::to_string(t + 1))).string();
        save_tensor(base + "-alpha.ssgt", trace.alpha.value());
        save_tensor(base + "-beta.ssgt", trace.beta.value());
        const Tensor& a = trace.alpha.value();
        const Tensor& bcoef = trace.beta.value();
        for (int64_t i = 0; i < a.numel(); ++i) {
          flags.push_back(std::abs(a.at(i)) <= config.zero_threshold ? 1 : 0);
        }
        for (int64_t i = 0; i < bcoef.numel(); ++i) {
          flags.push_back(std::abs(bcoef.at(i)) <= config.zero_threshold ? 1 : 0);
        }
      }
    }
    rec.xi_bar = metrics::avg_position_sparsity(xi_list);
    if (sastm_active) {
      sign_history.steps.push_back(step);
      sign_history.flags.push_back(std::move(flags));
      rec.sign_stable_fraction =
          metrics::sign_stability(sign_history, burn_in).stable_fraction;
    } else {
      rec.sign_stable_fraction = 1.0;
    }
    rec.negw_per_stage = gen.negative_weight_fraction();

    save_run_checkpoint((out_dir / "checkpoints" / (step_name(step) + ".ssgt")).string(), gen,
                        critic, step);
    Rng grid_rng = substream(config.seed, "samples/" + std::to_string(step));
    Tensor zg = randn(grid_rng, {64, config.latent_dim}, dt);
    png::write_sample_grid((out_dir / "samples" / (step_name(step) + ".png")).string(),
                           gen.sample(zg, nn::BnMode::kBatchStats), 8);
  };

  auto write_row = [&](const StepLosses& losses, const EvalRecord* rec) {
    runlog << losses.step << "," << fmt_num(losses.loss_d) << "," << fmt_num(losses.loss_g)
           << "," << fmt_num(losses.gp);
    if (rec != nullptr) {
      runlog << "," << fmt_num(rec->fid) << "," << fmt_num(rec->xi_bar) << ","
             << fmt_num(rec->sign_stable_fraction) << "," << rec->eval_samples;
      for (double z : rec->zeta_per_stage) runlog << "," << fmt_num(z);
      for (double w : rec->negw_per_stage) runlog << "," << fmt_num(w);
    } else {
      runlog << ",,,,";
      for (int64_t t = 0; t < 2 * T - 1; ++t) runlog << ",";
    }
    runlog << "\n" << std::flush;
  };

  try {
    for (int64_t step = start_step + 1; step <= config.steps; ++step) {
      StepLosses losses;
      losses.step = step;
      for (int64_t j = 0; j < config.d_steps_per_g; ++j) {
        Tensor real = sample_batch(dataset.images, data_rng, config.batch_size);
        Tensor z = randn(latent_rng, {config.batch_size, config.latent_dim}, dt);
        Tensor fake = gen.sample(z, nn::BnMode::kBatchStats);
        Tape tape;
        CriticLoss cl = critic_loss(tape, critic, real, fake, config.gp_lambda, interp_rng);
        const double loss_value = cl.total.value().item();
        if (!std::isfinite(loss_value)) {
          throw AbortSignal{"non-finite critic loss at step " + std::to_string(step)};
        }
        auto grads = backward(tape, cl.total, critic.params().variables());
        for (const auto& p : critic.params().all()) {
          nn::adam_step(*p, grads.at(p->var.node()).value(), adam_d);
        }
        losses.loss_d = loss_value;
        losses.gp = config.gp_lambda * cl.penalty.value().item();
      }
      {
        Tensor z = randn(latent_rng, {config.batch_size, config.latent_dim}, dt);
        Tape tape;
        auto gout = gen.forward(&tape, make_constant(z), nn::BnMode::kTrain, false);
        Variable scores = critic.forward(&tape, gout.image);
        Variable loss_g = op::neg(&tape, op::mean_all(&tape, scores));
        const double loss_value = loss_g.value().item();
        if (!std::isfinite(loss_value)) {
          throw AbortSignal{"non-finite generator loss at step " + std::to_string(step)};
        }
        auto grads = backward(tape, loss_g, gen.params().variables());
        for (const auto& p : gen.params().all()) {
          nn::adam_step(*p, grads.at(p->var.node()).value(), adam_g);
        }
        losses.loss_g = loss_value;
      }
      outcome.log.losses.push_back(losses);
      outcome.completed_steps = step;

      const bool do_eval =
          (config.eval_every > 0 && step % config.eval_every == 0) || step == config.steps;
      if (do_eval) {
        EvalRecord rec;
        evaluate(step, rec);
        outcome.final_fid = rec.fid;
        outcome.log.evals.push_back(rec);
        write_row(losses, &outcome.log.evals.back());
        progress("step " + std::to_string(step) + " fid " + fmt_num(rec.fid) + " xi_bar " +
                 fmt_num(rec.xi_bar));
      } else {
        write_row(losses, nullptr);
      }
    }
  } catch (const AbortSignal& abort) {
    outcome.aborted = true;
    outcome.abort_reason = abort.reason;
    save_run_checkpoint(
        (out_dir / "checkpoints" / ("abort-" + step_name(outcome.completed_steps) + ".ssgt"))
            .string(),
        gen, critic, outcome.completed_steps);
    progress("aborted: " + abort.reason);
  } catch (const Error& e) {
    outcome.aborted = true;
    outcome.abort_reason = e.what();
    save_run_checkpoint(
        (out_dir / "checkpoints" / ("abort-" + step_name(outcome.completed_steps) + ".ssgt"))
            .string(),
        gen, critic, outcome.completed_steps);
    progress(std::string("aborted: ") + e.what());
  }

  nlohmann::json summary;
  summary["command"] = "train";
  summary["ok"] = !outcome.aborted;
  summary["aborted"] = outcome.aborted;
  if (outcome.aborted) summary["abort_reason"] = outcome.abort_reason;
  summary["completed_steps"] = outcome.completed_steps;
  summary["final_fid"] = outcome.final_fid;
  summary["out_dir"] = config.out_dir;
  summary["seed"] = config.seed;
  summary["sastm"] = config.sastm;
  summary["arch"] = config.arch;
  summary["precision"] = config.precision;
  summary["eval_samples"] = config.eval_samples;
  summary["resumed"] = resuming;
  std::ofstream sf(out_dir / "summary.json");
  sf << summary.dump(2) << "\n";
  return outcome;
}

}  // namespace ssgan::train
