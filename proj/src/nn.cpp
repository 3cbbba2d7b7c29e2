#include "ssgan/nn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace ssgan::nn {

namespace op = ssgan::ops;

ParamPtr ParamStore::create(const std::string& name, Tensor init) {
  if (by_name_.count(name) != 0) throw Error("duplicate parameter name: " + name);
  auto p = std::make_shared<Param>();
  p->name = name;
  p->m = Tensor::zeros(init.shape(), init.dtype());
  p->u = Tensor::zeros(init.shape(), init.dtype());
  p->var = make_leaf(std::move(init));
  params_.push_back(p);
  by_name_[name] = p;
  return p;
}

ParamPtr ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

std::vector<Variable> ParamStore::variables() const {
  std::vector<Variable> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(p->var);
  return vars;
}

Tensor init_normal(const std::vector<int64_t>& shape, double mean, double stddev, uint64_t seed,
                   const std::string& name, DType dt) {
  Rng rng = substream(seed, "init/" + name);
  Tensor t = Tensor::empty(shape, dt);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(mean, stddev));
  return t;
}

Tensor init_uniform_fan_in(const std::vector<int64_t>& shape, int64_t fan_in, uint64_t seed,
                           const std::string& name, DType dt) {
  Rng rng = substream(seed, "init/" + name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::empty(shape, dt);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-bound, bound));
  return t;
}

Linear::Linear(ParamStore& store, const std::string& name, int64_t in, int64_t out, uint64_t seed,
               DType dt) {
  w = store.create(name + ".w", init_uniform_fan_in({in, out}, in, seed, name + ".w", dt));
  b = store.create(name + ".b", Tensor::zeros({out}, dt));
}

Linear Linear::with_normal_init(ParamStore& store, const std::string& name, int64_t in,
                                int64_t out, double stddev, double bias_value, uint64_t seed,
                                DType dt) {
  Linear l;
  l.w = store.create(name + ".w", init_normal({in, out}, 0.0, stddev, seed, name + ".w", dt));
  l.b = store.create(name + ".b", Tensor::full({out}, bias_value, dt));
  return l;
}

Variable Linear::forward(Tape* tape, const Variable& x) const {
  if (x.shape().size() != 2 || x.shape()[1] != w->var.shape()[0]) {
    throw Error("linear " + w->name + ": input " + shape_str(x.shape()) + " incompatible with " +
                shape_str(w->var.shape()));
  }
  return op::add(tape, op::matmul(tape, x, w->var), b->var);
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int64_t cin, int64_t cout, int64_t k,
               int64_t stride_, int64_t pad_, uint64_t seed, DType dt)
    : stride(stride_), pad(pad_) {
  w = store.create(name + ".w", init_normal({cout, cin, k, k}, 0.0, 0.02, seed, name + ".w", dt));
  b = store.create(name + ".b", Tensor::zeros({cout}, dt));
}

Variable Conv2d::forward(Tape* tape, const Variable& x) const {
  Variable y = op::conv2d(tape, x, w->var, stride, pad);
  Variable bb = op::reshape(tape, b->var, {1, b->var.shape()[0], 1, 1});
  return op::add(tape, y, bb);
}

ConvTranspose2d::ConvTranspose2d(ParamStore& store, const std::string& name, int64_t cin,
                                 int64_t cout, int64_t k, int64_t stride_, int64_t pad_,
                                 uint64_t seed, DType dt)
    : stride(stride_), pad(pad_) {
  w = store.create(name + ".w", init_normal({cin, cout, k, k}, 0.0, 0.02, seed, name + ".w", dt));
  b = store.create(name + ".b", Tensor::zeros({cout}, dt));
}

Variable ConvTranspose2d::forward(Tape* tape, const Variable& x) const {
  Variable y = op::conv_transpose2d(tape, x, w->var, stride, pad);
  Variable bb = op::reshape(tape, b->var, {1, b->var.shape()[0], 1, 1});
  return op::add(tape, y, bb);
}

BatchNorm2d::BatchNorm2d(ParamStore& store, const std::string& name, int64_t channels_,
                         double eps_, double momentum_, bool affine_, DType dt)
    : channels(channels_), eps(eps_), momentum(momentum_), affine(affine_) {
  if (affine) {
    gamma = store.create(name + ".gamma", Tensor::full({channels}, 1.0, dt));
    beta = store.create(name + ".beta", Tensor::zeros({channels}, dt));
  }
  running_mean = Tensor::zeros({channels}, dt);
  running_var = Tensor::full({channels}, 1.0, dt);
}

Variable BatchNorm2d::forward(Tape* tape, const Variable& x, BnMode mode) {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != channels) {
    throw Error("batchnorm: input " + shape_str(s) + " does not match " +
                std::to_string(channels) + " channels");
  }
  Variable norm;
  if (mode == BnMode::kTrain || mode == BnMode::kBatchStats) {
    if (s[0] * s[2] * s[3] < 2) {
      throw Error("batchnorm: training needs at least 2 values per channel, got shape " +
                  shape_str(s));
    }
    Variable mu = op::mean_axes(tape, x, {0, 2, 3}, true);
    Variable xc = op::sub(tape, x, mu);
    Variable var = op::mean_axes(tape, op::square(tape, xc), {0, 2, 3}, true);
    if (eps == 0.0) {
      for (int64_t c = 0; c < channels; ++c) {
        if (var.value().at(c) == 0.0) {
          throw Error("batchnorm: zero variance in channel " + std::to_string(c) +
                      " with epsilon 0");
        }
      }
    }
    norm = op::divide(tape, xc, op::sqrt(tape, op::add_scalar(tape, var, eps)));

    last_batch_mean = mu.value().reshaped({channels}).clone();
    last_batch_var = var.value().reshaped({channels}).clone();
    if (mode == BnMode::kTrain) {
      for (int64_t c = 0; c < channels; ++c) {
        running_mean.set(
            c, (1.0 - momentum) * running_mean.at(c) + momentum * last_batch_mean.at(c));
        running_var.set(c,
                        (1.0 - momentum) * running_var.at(c) + momentum * last_batch_var.at(c));
      }
    }
  } else {
    Variable rm = make_constant(running_mean.reshaped({1, channels, 1, 1}));
    Variable rv = make_constant(running_var.reshaped({1, channels, 1, 1}));
    norm =
        op::divide(tape, op::sub(tape, x, rm), op::sqrt(tape, op::add_scalar(tape, rv, eps)));
  }
  if (!affine) return norm;
  Variable g = op::reshape(tape, gamma->var, {1, channels, 1, 1});
  Variable bb = op::reshape(tape, beta->var, {1, channels, 1, 1});
  return op::add(tape, op::mul(tape, norm, g), bb);
}

Variable mlp_forward(Tape* tape, const Variable& x, const std::vector<Linear>& layers,
                     Activation between) {
  Variable h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(tape, h);
    if (i + 1 == layers.size()) break;
    switch (between) {
      case Activation::kIdentity: break;
      case Activation::kRelu: h = op::relu(tape, h); break;
      case Activation::kTanh: h = op::tanh(tape, h); break;
    }
  }
  return h;
}

void adam_step(Param& p, const Tensor& grad, const AdamConfig& cfg) {
  if (grad.shape() != p.var.shape()) {
    throw Error("adam: gradient shape " + shape_str(grad.shape()) + " for parameter " + p.name +
                " of shape " + shape_str(p.var.shape()));
  }
  if (!grad.all_finite()) {
    throw Error("adam: non-finite gradient for parameter " + p.name);
  }
  p.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
  dispatch(p.var.value().dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto pm = p.m.mut<T>();
    auto pu = p.u.mut<T>();
    auto pw = p.var.value().mut<T>();
    auto pg = grad.data<T>();
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    for (size_t i = 0; i < pw.size(); ++i) {
      pm[i] = b1 * pm[i] + (T(1) - b1) * pg[i];
      pu[i] = b2 * pu[i] + (T(1) - b2) * pg[i] * pg[i];
      const double mhat = static_cast<double>(pm[i]) / c1;
      const double uhat = static_cast<double>(pu[i]) / c2;
      pw[i] -= static_cast<T>(cfg.lr * mhat / (std::sqrt(uhat) + cfg.eps));
    }
  });
}

const Tensor* Snapshot::find(const std::string& name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_snapshot(const std::string& path, const Snapshot& snap) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + path);
  f << "SSGAN-SNAPSHOT 1\n";
  f << "global_step " << snap.global_step << "\n";
  f << "tensors " << snap.entries.size() << "\n";
  for (const auto& [name, t] : snap.entries) {
    int64_t step = 0;
    auto it = snap.steps.find(name);
    if (it != snap.steps.end()) step = it->second;
    f << name << " " << t.rank();
    for (int64_t e : t.shape()) f << " " << e;
    f << " " << dtype_name(t.dtype()) << " " << step << "\n";
  }
  f << "END\n";
  for (const auto& [name, t] : snap.entries) write_tensor(f, t);
  if (!f) throw Error("write failed: " + path);
}

Snapshot read_snapshot(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "SSGAN-SNAPSHOT 1") {
    throw Error("snapshot: bad header in " + path);
  }
  Snapshot snap;
  size_t count = 0;
  {
    std::getline(f, line);
    std::istringstream is(line);
    std::string key;
    is >> key >> snap.global_step;
    if (key != "global_step") throw Error("snapshot: missing global_step");
    std::getline(f, line);
    std::istringstream is2(line);
    is2 >> key >> count;
    if (key != "tensors") throw Error("snapshot: missing tensor count");
  }
  std::vector<std::string> names(count);
  for (size_t i = 0; i < count; ++i) {
    std::getline(f, line);
    std::istringstream is(line);
    int64_t rank = 0, step = 0;
    std::string dtype;
    is >> names[i] >> rank;
    for (int64_t d = 0; d < rank; ++d) {
      int64_t e;
      is >> e;
    }
    is >> dtype >> step;
    if (!is) throw Error("snapshot: malformed manifest line: " + line);
    snap.steps[names[i]] = step;
  }
  std::getline(f, line);
  if (line != "END") throw Error("snapshot: missing END marker");
  for (size_t i = 0; i < count; ++i) snap.entries.emplace_back(names[i], read_tensor(f));
  return snap;
}

Snapshot snapshot_params(const ParamStore& store,
                         const std::vector<std::pair<std::string, Tensor>>& buffers,
                         int64_t global_step) {
  Snapshot snap;
  snap.global_step = global_step;
  for (const auto& p : store.all()) {
    snap.entries.emplace_back("param/" + p->name, p->var.value().clone());
    snap.steps["param/" + p->name] = p->step;
    snap.entries.emplace_back("adam_m/" + p->name, p->m.clone());
    snap.entries.emplace_back("adam_u/" + p->name, p->u.clone());
  }
  for (const auto& [name, t] : buffers) snap.entries.emplace_back("buffer/" + name, t.clone());
  return snap;
}

void restore_params(ParamStore& store,
                    const std::vector<std::pair<std::string, Tensor*>>& buffers,
                    const Snapshot& snap) {
  for (const auto& p : store.all()) {
    const Tensor* w = snap.find("param/" + p->name);
    if (w == nullptr) throw Error("snapshot missing parameter " + p->name);
    if (w->shape() != p->var.shape()) {
      throw Error("snapshot parameter " + p->name + " has shape " + shape_str(w->shape()) +
                  ", expected " + shape_str(p->var.shape()));
    }
    p->var.value() = w->clone();
    if (const Tensor* m = snap.find("adam_m/" + p->name)) p->m = m->clone();
    if (const Tensor* u = snap.find("adam_u/" + p->name)) p->u = u->clone();
    auto it = snap.steps.find("param/" + p->name);
    p->step = it == snap.steps.end() ? 0 : it->second;
  }
  for (const auto& [name, dst] : buffers) {
    const Tensor* t = snap.find("buffer/" + name);
    if (t == nullptr) throw Error("snapshot missing buffer " + name);
    *dst = t->clone();
  }
}

}  // namespace ssgan::nn
