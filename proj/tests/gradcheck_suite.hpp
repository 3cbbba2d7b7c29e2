#pragma once

// Finite-difference coverage of every differentiable primitive, shared by
// the unit tests and the acceptance suite.

#include <string>
#include <vector>

#include "oracles.hpp"

namespace gradcheck {

using ssgan::Tape;
using ssgan::Tensor;
using ssgan::Variable;
namespace ops = ssgan::ops;

struct Case {
  std::string name;
  // Builds the tensors for one instance.
  std::function<std::vector<Tensor>(ssgan::Rng&)> make_inputs;
  oracles::GraphFn fn;
};

// Random but fixed weights turn a tensor output into a well-conditioned
// scalar without hitting any reduction symmetry.
inline Variable weigh(Tape& tape, const Variable& v, uint64_t salt) {
  ssgan::Rng rng(0x5eed0000 + salt);
  Tensor w = oracles::rand_uniform(v.shape(), rng, 0.3, 1.3);
  return ops::sum_all(&tape, ops::mul(&tape, v, ssgan::make_constant(w)));
}

inline std::vector<Case> primitive_cases() {
  std::vector<Case> cases;
  auto u = [](std::vector<int64_t> s, double lo, double hi) {
    return [s, lo, hi](ssgan::Rng& rng) {
      return std::vector<Tensor>{oracles::rand_uniform(s, rng, lo, hi)};
    };
  };

  cases.push_back({"add",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{oracles::rand_uniform({3, 4}, rng, -1, 1),
                                                oracles::rand_uniform({4}, rng, -1, 1)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::add(&t, v[0], v[1]), 1);
                   }});
  cases.push_back({"sub",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{oracles::rand_uniform({2, 3, 4}, rng, -1, 1),
                                                oracles::rand_uniform({3, 1}, rng, -1, 1)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::sub(&t, v[0], v[1]), 2);
                   }});
  cases.push_back({"mul",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{oracles::rand_uniform({2, 3, 1}, rng, -1, 1),
                                                oracles::rand_uniform({1, 1, 4}, rng, -1, 1)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::mul(&t, v[0], v[1]), 3);
                   }});
  cases.push_back({"div",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{
                         oracles::rand_uniform({3, 4}, rng, -1, 1),
                         oracles::rand_signed_away_from_zero({3, 4}, rng, 0.7, 1.7)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::divide(&t, v[0], v[1]), 4);
                   }});
  cases.push_back({"matmul",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{oracles::rand_uniform({3, 5}, rng, -1, 1),
                                                oracles::rand_uniform({5, 2}, rng, -1, 1)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::matmul(&t, v[0], v[1]), 5);
                   }});
  cases.push_back({"transpose2d", u({4, 3}, -1, 1),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::transpose(&t, v[0]), 6);
                   }});
  cases.push_back({"reshape", u({2, 6}, -1, 1),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::reshape(&t, v[0], {3, 2, 2}), 7);
                   }});
  cases.push_back({"concat",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{oracles::rand_uniform({2, 3}, rng, -1, 1),
                                                oracles::rand_uniform({2, 2}, rng, -1, 1)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::concat(&t, {v[0], v[1]}, 1), 8);
                   }});
  cases.push_back({"slice", u({4, 5}, -1, 1),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::slice(&t, v[0], {1, 2}, {3, 5}), 9);
                   }});
  cases.push_back({"broadcast_to", u({3, 1}, -1, 1),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::broadcast_to(&t, v[0], {2, 3, 4}), 10);
                   }});
  cases.push_back({"sum_axes", u({2, 3, 4}, -1, 1),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::sum_axes(&t, v[0], {0, 2}, false), 11);
                   }});
  cases.push_back({"sum_axes_keepdims", u({2, 3, 4}, -1, 1),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::sum_axes(&t, v[0], {1}, true), 12);
                   }});
  cases.push_back({"mean_axes", u({2, 3, 4}, -1, 1),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::mean_axes(&t, v[0], {0, 1}, false), 13);
                   }});
  cases.push_back({"relu",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{
                         oracles::rand_signed_away_from_zero({3, 4}, rng, 0.2, 1.2)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::relu(&t, v[0]), 14);
                   }});
  cases.push_back({"leaky_relu",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{
                         oracles::rand_signed_away_from_zero({3, 4}, rng, 0.2, 1.2)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::leaky_relu(&t, v[0], 0.2), 15);
                   }});
  cases.push_back({"tanh", u({3, 4}, -2, 2),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::tanh(&t, v[0]), 16);
                   }});
  cases.push_back({"square", u({3, 4}, -2, 2),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::square(&t, v[0]), 17);
                   }});
  cases.push_back({"sqrt", u({3, 4}, 0.5, 2.0),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::sqrt(&t, v[0]), 18);
                   }});
  cases.push_back({"affine", u({3, 4}, -1, 1),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::affine(&t, v[0], 1.7, -0.3), 19);
                   }});
  cases.push_back({"conv2d_s1",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{oracles::rand_uniform({2, 2, 5, 5}, rng, -1, 1),
                                                oracles::rand_uniform({3, 2, 3, 3}, rng, -1, 1)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::conv2d(&t, v[0], v[1], 1, 1), 20);
                   }});
  cases.push_back({"conv2d_s2",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{oracles::rand_uniform({2, 2, 6, 6}, rng, -1, 1),
                                                oracles::rand_uniform({3, 2, 4, 4}, rng, -1, 1)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::conv2d(&t, v[0], v[1], 2, 1), 21);
                   }});
  cases.push_back({"conv_transpose2d_s1",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{oracles::rand_uniform({2, 3, 4, 4}, rng, -1, 1),
                                                oracles::rand_uniform({3, 2, 3, 3}, rng, -1, 1)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::conv_transpose2d(&t, v[0], v[1], 1, 0), 22);
                   }});
  cases.push_back({"conv_transpose2d_s2",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{oracles::rand_uniform({2, 3, 4, 4}, rng, -1, 1),
                                                oracles::rand_uniform({3, 2, 4, 4}, rng, -1, 1)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::conv_transpose2d(&t, v[0], v[1], 2, 1), 23);
                   }});
  cases.push_back({"conv_transpose2d_1x1",
                   [](ssgan::Rng& rng) {
                     return std::vector<Tensor>{oracles::rand_uniform({2, 3, 4, 4}, rng, -1, 1),
                                                oracles::rand_uniform({3, 5, 1, 1}, rng, -1, 1)};
                   },
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::conv_transpose2d(&t, v[0], v[1], 1, 0), 24);
                   }});
  cases.push_back({"upsample2x", u({2, 3, 3, 3}, -1, 1),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::upsample2x(&t, v[0]), 25);
                   }});
  cases.push_back({"downsample2x_sum", u({2, 3, 4, 4}, -1, 1),
                   [](Tape& t, const std::vector<Variable>& v) {
                     return weigh(t, ops::downsample2x_sum(&t, v[0]), 26);
                   }});
  return cases;
}

// Functions whose value already contains one backward pass; checking their
// gradients exercises the adjoint-of-adjoint path (including the conv
// weight-gradient ops).
inline std::vector<Case> second_order_cases() {
  std::vector<Case> cases;
  cases.push_back(
      {"grad_norm_of_matmul_net",
       [](ssgan::Rng& rng) {
         return std::vector<Tensor>{oracles::rand_uniform({4, 3}, rng, -1, 1),
                                    oracles::rand_uniform({3, 1}, rng, -1, 1),
                                    oracles::rand_uniform({2, 4}, rng, -1, 1)};
       },
       [](Tape& t, const std::vector<Variable>& v) {
         // f = || d/dx sum(tanh(x W1) w2) ||^2
         Variable x = v[2];
         Variable s = ops::sum_all(
             &t, ops::matmul(&t, ops::tanh(&t, ops::matmul(&t, x, v[0])), v[1]));
         auto g = ssgan::backward(t, s, {x});
         return ops::sum_all(&t, ops::square(&t, g.at(x.node())));
       }});
  cases.push_back(
      {"grad_norm_through_conv",
       [](ssgan::Rng& rng) {
         return std::vector<Tensor>{oracles::rand_uniform({2, 2, 3, 3}, rng, -1, 1),
                                    oracles::rand_uniform({1, 2, 4, 4}, rng, -1, 1)};
       },
       [](Tape& t, const std::vector<Variable>& v) {
         Variable x = v[1];
         Variable s = ops::sum_all(&t, ops::conv2d(&t, x, v[0], 1, 1));
         auto g = ssgan::backward(t, s, {x});
         return ops::sum_all(&t, ops::square(&t, g.at(x.node())));
       }});
  cases.push_back(
      {"grad_norm_through_tconv",
       [](ssgan::Rng& rng) {
         return std::vector<Tensor>{oracles::rand_uniform({2, 3, 2, 2}, rng, -1, 1),
                                    oracles::rand_uniform({1, 2, 3, 3}, rng, -1, 1)};
       },
       [](Tape& t, const std::vector<Variable>& v) {
         Variable x = v[1];
         Variable s = ops::sum_all(&t, ops::conv_transpose2d(&t, x, v[0], 2, 1));
         auto g = ssgan::backward(t, s, {x});
         return ops::sum_all(&t, ops::square(&t, g.at(x.node())));
       }});
  return cases;
}

struct SuiteResult {
  double max_rel = 0.0;
  std::string worst_case;
};

inline SuiteResult run(const std::vector<Case>& cases, int instances, double step = 1e-5) {
  SuiteResult res;
  for (const auto& c : cases) {
    for (int i = 0; i < instances; ++i) {
      ssgan::Rng rng(ssgan::fnv1a(c.name) + static_cast<uint64_t>(i));
      auto inputs = c.make_inputs(rng);
      auto fd = oracles::fd_check(c.fn, inputs, step);
      if (fd.max_rel > res.max_rel) {
        res.max_rel = fd.max_rel;
        res.worst_case = c.name;
      }
    }
  }
  return res;
}

}  // namespace gradcheck
