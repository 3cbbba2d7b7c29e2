#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "gradcheck_suite.hpp"
#include "oracles.hpp"
#include "ssgan/ops.hpp"
#include "ssgan/tape.hpp"
#include "ssgan/tensor.hpp"

using namespace ssgan;
namespace op = ssgan::ops;

TEST_CASE("relu forward matches definition") {
  Tape t;
  auto x = make_leaf(Tensor::from({3}, {-1, 0, 2}, DType::F64));
  auto y = op::relu(&t, x);
  CHECK(y.value().at(0) == 0.0);
  CHECK(y.value().at(1) == 0.0);
  CHECK(y.value().at(2) == 2.0);
}

TEST_CASE("matmul identity leaves matrix unchanged") {
  Rng rng(7);
  Tensor a = oracles::rand_uniform({3, 3}, rng, -2, 2);
  Tensor eye = Tensor::zeros({3, 3}, DType::F64);
  for (int i = 0; i < 3; ++i) eye.set(i * 3 + i, 1.0);
  Tensor out = op::matmul_val(eye, a);
  CHECK(oracles::max_abs_diff(out, a) == 0.0);
}

TEST_CASE("broadcast mul matches triple-loop oracle") {
  Rng rng(11);
  Tensor a = oracles::rand_uniform({2, 3, 1}, rng, -2, 2);
  Tensor b = oracles::rand_uniform({1, 1, 4}, rng, -2, 2);
  auto prod = op::mul(nullptr, make_constant(a), make_constant(b));
  CHECK(prod.shape() == std::vector<int64_t>{2, 3, 4});
  Tensor expect = oracles::broadcast_mul_3d_oracle(a, b);
  CHECK(oracles::max_abs_diff(prod.value(), expect) == 0.0);
}

TEST_CASE("shape mismatch reports op and shapes") {
  Tensor a = Tensor::zeros({2, 3}, DType::F64);
  Tensor b = Tensor::zeros({4, 5}, DType::F64);
  try {
    op::add(nullptr, make_constant(a), make_constant(b));
    FAIL("expected shape error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 5]") != std::string::npos);
  }
  CHECK_THROWS_AS(op::matmul(nullptr, make_constant(a), make_constant(b)), Error);
}

TEST_CASE("backward of w^2 and its second derivative") {
  Tape t;
  auto w = make_leaf(Tensor::scalar(3.0, DType::F64));
  auto f = op::square(&t, w);
  auto g = backward(t, f, {w});
  const Variable gw = g.at(w.node());
  CHECK(gw.value().item() == doctest::Approx(6.0).epsilon(1e-12));

  auto g2 = backward(t, gw, {w});
  CHECK(g2.at(w.node()).value().item() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("unreachable input gets exactly zero gradient") {
  Tape t;
  auto w = make_leaf(Tensor::scalar(3.0, DType::F64));
  auto v = make_leaf(Tensor::from({2}, {1, 2}, DType::F64));
  auto f = op::square(&t, w);
  auto g = backward(t, f, {v});
  CHECK(g.at(v.node()).value().at(0) == 0.0);
  CHECK(g.at(v.node()).value().at(1) == 0.0);
}

TEST_CASE("backward requires scalar output") {
  Tape t;
  auto x = make_leaf(Tensor::from({2}, {1, 2}, DType::F64));
  auto y = op::relu(&t, x);
  CHECK_THROWS_AS(backward(t, y, {x}), Error);
}

TEST_CASE("all primitives pass finite-difference checks") {
  auto res = gradcheck::run(gradcheck::primitive_cases(), 3);
  CAPTURE(res.worst_case);
  CHECK(res.max_rel <= 1e-5);
}

TEST_CASE("second-order graphs pass finite-difference checks") {
  auto res = gradcheck::run(gradcheck::second_order_cases(), 3, 1e-4);
  CAPTURE(res.worst_case);
  CHECK(res.max_rel <= 1e-4);
}

TEST_CASE("transposed conv 1x1 identity kernel is identity") {
  Rng rng(3);
  Tensor x = oracles::rand_uniform({1, 1, 3, 3}, rng, -1, 1);
  Tensor k = Tensor::from({1, 1, 1, 1}, {1.0}, DType::F64);
  Tensor y = op::conv_transpose2d_val(x, k, 1, 0);
  CHECK(oracles::max_abs_diff(y, x) == 0.0);
}

TEST_CASE("transposed conv 1x1 equals per-pixel matmul oracle") {
  Rng rng(5);
  Tensor x = oracles::rand_uniform({2, 3, 4, 4}, rng, -1, 1);
  Tensor w = oracles::rand_uniform({3, 5, 1, 1}, rng, -1, 1);
  Tensor got = op::conv_transpose2d_val(x, w, 1, 0);
  Tensor expect = oracles::tconv1x1_matmul_oracle(x, w);
  CHECK(oracles::max_abs_diff(got, expect) <= 1e-12);
}

TEST_CASE("transposed conv stride-2 matches scatter-add oracle") {
  Rng rng(9);
  SUBCASE("2x2 input, 2x2 kernel, stride 2 gives 4x4") {
    Tensor x = oracles::rand_uniform({1, 1, 2, 2}, rng, -1, 1);
    Tensor w = oracles::rand_uniform({1, 1, 2, 2}, rng, -1, 1);
    Tensor got = op::conv_transpose2d_val(x, w, 2, 0);
    CHECK(got.shape() == std::vector<int64_t>{1, 1, 4, 4});
    CHECK(oracles::max_abs_diff(got, oracles::tconv2d_scatter_oracle(x, w, 2, 0)) <= 1e-14);
  }
  SUBCASE("strided padded case") {
    Tensor x = oracles::rand_uniform({2, 3, 4, 4}, rng, -1, 1);
    Tensor w = oracles::rand_uniform({3, 2, 4, 4}, rng, -1, 1);
    Tensor got = op::conv_transpose2d_val(x, w, 2, 1);
    CHECK(oracles::max_abs_diff(got, oracles::tconv2d_scatter_oracle(x, w, 2, 1)) <= 1e-13);
  }
}

TEST_CASE("transposed conv rejects non-positive output extent") {
  Tensor x = Tensor::zeros({1, 1, 1, 1}, DType::F64);
  Tensor w = Tensor::zeros({1, 1, 2, 2}, DType::F64);
  CHECK_THROWS_AS(op::conv_transpose2d_val(x, w, 1, 1), Error);
}

TEST_CASE("forward determinism: same seed bit-identical") {
  auto build = [] {
    Rng rng(42);
    Tensor x = oracles::rand_normal({2, 3, 8, 8}, rng, 0, 1);
    Tensor w = oracles::rand_normal({3, 4, 4, 4}, rng, 0, 0.2);
    Tape t;
    auto y = op::tanh(&t, op::conv_transpose2d(&t, make_leaf(x), make_leaf(w), 2, 1));
    return y.value().digest();
  };
  CHECK(build() == build());
}

TEST_CASE("tensor container round-trips") {
  Rng rng(13);
  for (DType dt : {DType::F32, DType::F64}) {
    Tensor t = oracles::rand_normal({2, 3, 4}, rng, 0, 1, dt);
    std::stringstream ss;
    write_tensor(ss, t);
    Tensor back = read_tensor(ss);
    CHECK(back.dtype() == t.dtype());
    CHECK(back.shape() == t.shape());
    CHECK(oracles::max_abs_diff(back, t) == 0.0);
  }
}

TEST_CASE("tensor container rejects bad magic") {
  std::stringstream ss;
  ss << "NOPE0000";
  CHECK_THROWS_AS(read_tensor(ss), Error);
}

TEST_CASE("gradient accumulates when a variable is used twice") {
  Tape t;
  auto x = make_leaf(Tensor::scalar(2.0, DType::F64));
  auto y = op::add(&t, op::square(&t, x), op::mul(&t, x, x));  // 2x^2
  auto g = backward(t, y, {x});
  CHECK(g.at(x.node()).value().item() == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("mixed dtype operations are rejected") {
  auto a = make_constant(Tensor::zeros({2}, DType::F32));
  auto b = make_constant(Tensor::zeros({2}, DType::F64));
  CHECK_THROWS_AS(op::add(nullptr, a, b), Error);
}
