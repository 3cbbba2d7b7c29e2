#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssgan/ops.hpp"
#include "ssgan/rng.hpp"
#include "ssgan/tape.hpp"

namespace ssgan::nn {

// One trainable tensor plus its optimizer state.
struct Param {
  std::string name;
  Variable var;  // leaf
  Tensor m;      // first moment
  Tensor u;      // second moment
  int64_t step = 0;
};
using ParamPtr = std::shared_ptr<Param>;

class ParamStore {
 public:
  ParamPtr create(const std::string& name, Tensor init);
  const std::vector<ParamPtr>& all() const { return params_; }
  ParamPtr find(const std::string& name) const;
  std::vector<Variable> variables() const;

 private:
  std::vector<ParamPtr> params_;  // registration order
  std::unordered_map<std::string, ParamPtr> by_name_;
};

// Every parameter is seeded from (run seed, its own name), so two models
// sharing layer names initialize identically no matter what else exists.
Tensor init_normal(const std::vector<int64_t>& shape, double mean, double stddev, uint64_t seed,
                   const std::string& name, DType dt);
Tensor init_uniform_fan_in(const std::vector<int64_t>& shape, int64_t fan_in, uint64_t seed,
                           const std::string& name, DType dt);

struct Linear {
  Linear() = default;
  // DCGAN-style default: fan-in scaled uniform weights, zero bias.
  Linear(ParamStore& store, const std::string& name, int64_t in, int64_t out, uint64_t seed,
         DType dt);
  // Normal-initialized weights with a constant bias (coefficient heads).
  static Linear with_normal_init(ParamStore& store, const std::string& name, int64_t in,
                                 int64_t out, double stddev, double bias_value, uint64_t seed,
                                 DType dt);
  Variable forward(Tape* tape, const Variable& x) const;
  ParamPtr w;  // [in, out]
  ParamPtr b;  // [out]
};

struct Conv2d {
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int64_t cin, int64_t cout, int64_t k,
         int64_t stride, int64_t pad, uint64_t seed, DType dt);
  Variable forward(Tape* tape, const Variable& x) const;
  ParamPtr w;  // [cout, cin, k, k]
  ParamPtr b;  // [cout]
  int64_t stride = 1, pad = 0;
};

struct ConvTranspose2d {
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore& store, const std::string& name, int64_t cin, int64_t cout,
                  int64_t k, int64_t stride, int64_t pad, uint64_t seed, DType dt);
  Variable forward(Tape* tape, const Variable& x) const;
  ParamPtr w;  // [cin, cout, k, k]
  ParamPtr b;  // [cout]
  int64_t stride = 1, pad = 0;
};

// kTrain normalizes with batch statistics and updates the running ones;
// kBatchStats normalizes the same way but leaves the running statistics
// untouched (sampling paths); kEval normalizes with the running statistics.
enum class BnMode { kTrain, kBatchStats, kEval };

struct BatchNorm2d {
  BatchNorm2d() = default;
  BatchNorm2d(ParamStore& store, const std::string& name, int64_t channels, double eps,
              double momentum, bool affine, DType dt);
  Variable forward(Tape* tape, const Variable& x, BnMode mode);

  int64_t channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  bool affine = false;
  ParamPtr gamma;  // [C], present when affine
  ParamPtr beta;   // [C]
  Tensor running_mean;  // buffers, not trained
  Tensor running_var;
  // Batch statistics of the latest training forward, for inspection.
  Tensor last_batch_mean;
  Tensor last_batch_var;
};

enum class Activation { kIdentity, kRelu, kTanh };

Variable mlp_forward(Tape* tape, const Variable& x, const std::vector<Linear>& layers,
                     Activation between);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected update; throws naming the parameter on a
// non-finite gradient.
void adam_step(Param& p, const Tensor& grad, const AdamConfig& cfg);

// Named-tensor container: text manifest (name, shape, dtype, step counter)
// followed by one flat tensor blob per entry.
struct Snapshot {
  int64_t global_step = 0;
  std::vector<std::pair<std::string, Tensor>> entries;  // ordered
  std::unordered_map<std::string, int64_t> steps;
  const Tensor* find(const std::string& name) const;
};

void write_snapshot(const std::string& path, const Snapshot& snap);
Snapshot read_snapshot(const std::string& path);

// Parameters, Adam moments and step counters under "param/", "adam_m/",
// "adam_u/"; extra buffers under "buffer/".
Snapshot snapshot_params(const ParamStore& store,
                         const std::vector<std::pair<std::string, Tensor>>& buffers,
                         int64_t global_step);
void restore_params(ParamStore& store,
                    const std::vector<std::pair<std::string, Tensor*>>& buffers,
                    const Snapshot& snap);

}  // namespace ssgan::nn
