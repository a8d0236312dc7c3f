/**
 *  Copyright (c) 2026 by Contributors
 * @file test_numeric_core.cc
 * @brief Tape operations, losses and the optimizer.
 */
#include <doctest.h>

#include <bit>
#include <cmath>
#include <random>

#include "kgt/gradcheck.hpp"
#include "kgt/gradsuite.hpp"
#include "kgt/optim.hpp"
#include "kgt/tensor.hpp"

using namespace kgt;
using namespace kgt::nn;

namespace {

std::vector<double> values(const Tape<double>& t, Var v) {
  const auto s = t.value(v);
  return {s.begin(), s.end()};
}

Tensor<double> random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor<double> t({r, c});
  for (auto& v : t.values) v = n(rng);
  return t;
}

}  // namespace

TEST_SUITE("numeric-core") {

TEST_CASE("matmul") {
  Tape<double> t;
  const auto a = t.constant(2, 2, {1, 2, 3, 4});
  const auto b = t.constant(2, 1, {1, 1});
  CHECK(values(t, t.matmul(a, b)) == std::vector<double>{3, 7});
  const auto id = t.constant(2, 2, {1, 0, 0, 1});
  CHECK(values(t, t.matmul(id, a)) == std::vector<double>{1, 2, 3, 4});
  CHECK_THROWS_AS(t.matmul(b, b), ShapeError);
}

TEST_CASE("matmul gradient against central differences") {
  std::mt19937_64 rng(1);
  const auto report = gradcheck("matmul", {random_tensor(rng, 5, 7), random_tensor(rng, 7, 3)},
                                [](Tape<double>& t, const std::vector<Var>& in) {
                                  return t.sum(t.gelu(t.matmul(in[0], in[1])));
                                },
                                kOpTolerance);
  CHECK(report.checked == 35 + 21);
  CHECK(report.passed());
}

TEST_CASE("every tape operation passes its gradient check") {
  const auto reports = op_gradchecks(7);
  CHECK(reports.size() >= 10);
  for (const auto& r : reports) {
    CAPTURE(r.name);
    CAPTURE(r.max_rel_error);
    CHECK(r.tolerance == kOpTolerance);
    CHECK(r.passed());
  }
}

TEST_CASE("masked_softmax") {
  Tape<double> t;
  SUBCASE("uniform logits spread evenly over unmasked entries") {
    const auto x = t.constant(1, 5, {2, 2, 2, 2, 2});
    const std::uint8_t mask[] = {1, 1, 1, 0, 0};
    const auto y = values(t, t.masked_softmax(x, mask));
    for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(y[3] == 0.0);
    CHECK(y[4] == 0.0);
  }
  SUBCASE("a single unmasked entry gets probability one") {
    const auto x = t.constant(1, 3, {5, -1, 9});
    const std::uint8_t mask[] = {0, 1, 0};
    CHECK(values(t, t.masked_softmax(x, mask)) == std::vector<double>{0, 1, 0});
  }
  SUBCASE("random rows sum to one and masked entries are exactly zero") {
    std::mt19937_64 rng(3);
    Tape<float> tf;
    const auto x = random_tensor(rng, 50, 9).cast<float>();
    std::vector<std::uint8_t> mask(450);
    for (std::size_t i = 0; i < 50; ++i) {
      for (std::size_t j = 0; j < 9; ++j) mask[i * 9 + j] = rng() % 2;
      mask[i * 9 + i % 9] = 1;
    }
    const auto y = tf.value(tf.masked_softmax(tf.constant(x), mask));
    for (std::size_t i = 0; i < 50; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        if (!mask[i * 9 + j]) CHECK(y[i * 9 + j] == 0.0f);
        s += y[i * 9 + j];
      }
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
  SUBCASE("fully masked row is an error") {
    const auto x = t.constant(2, 2, {1, 2, 3, 4});
    const std::uint8_t mask[] = {1, 0, 0, 0};
    CHECK_THROWS_AS(t.masked_softmax(x, mask), NumericError);
  }
}

TEST_CASE("gelu, layer_norm, dropout, gather") {
  Tape<double> t;
  CHECK(gelu_scalar(0.0) == 0.0);
  // tanh approximation at 1: 0.5 (1 + tanh(sqrt(2/pi) 1.044715)).
  CHECK(gelu_scalar(1.0) == doctest::Approx(0.8411919906).epsilon(1e-9));

  const auto constant_row = t.constant(1, 4, {3, 3, 3, 3});
  const auto ln = t.layer_norm(constant_row, t.constant(1, 4, {1, 1, 1, 1}), t.constant(1, 4, {0, 0, 0, 0}));
  for (double v : values(t, ln)) CHECK(v == 0.0);
  const auto row = t.constant(1, 4, {1, 2, 3, 4});
  const auto y = values(t, t.layer_norm(row, t.constant(1, 4, {1, 1, 1, 1}), t.constant(1, 4, {0, 0, 0, 0})));
  double mean = 0, var = 0;
  for (double v : y) mean += v / 4;
  for (double v : y) var += (v - mean) * (v - mean) / 4;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-4));

  std::mt19937_64 rng(2);
  const auto x = t.constant(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t.dropout(x, 0.0, rng, true).id == x.id);
  CHECK(t.dropout(x, 0.5, rng, false).id == x.id);
  CHECK_THROWS_AS(t.dropout(x, 1.0, rng, true), ConfigError);
  const auto d = values(t, t.dropout(x, 0.5, rng, true));
  for (std::size_t i = 0; i < 6; ++i) CHECK((d[i] == 0.0 || d[i] == 2.0 * (i + 1)));

  const auto table = t.constant(3, 2, {0, 1, 10, 11, 20, 21});
  CHECK(values(t, t.gather_rows(table, {2, 0, 2})) == std::vector<double>{20, 21, 0, 1, 20, 21});
}

TEST_CASE("dropout keeps the expectation") {
  Tape<double> t;
  std::mt19937_64 rng(4);
  const auto x = t.constant(1, 20000, std::vector<double>(20000, 1.0));
  double s = 0;
  for (double v : values(t, t.dropout(x, 0.1, rng, true))) s += v;
  // Per element variance of the inverted mask is p / (1 - p).
  CHECK(std::abs(s / 20000 - 1.0) <= 3.0 * std::sqrt(0.1 / 0.9 / 20000));
}

TEST_CASE("label smoothing") {
  const auto y = smoothed_targets<double>(0, 0.1, 5);
  CHECK(y[0] == doctest::Approx(0.92).epsilon(1e-15));
  for (int i = 1; i < 5; ++i) CHECK(y[i] == doctest::Approx(0.02).epsilon(1e-15));
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng() % 500;
    const double a = std::uniform_real_distribution<double>(0.0, 0.99)(rng);
    const auto v = smoothed_targets<double>(rng() % c, a, c);
    double s = 0;
    for (double e : v) s += e;
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
  CHECK_THROWS(smoothed_targets<double>(5, 0.1, 5));
}

TEST_CASE("smoothed cross-entropy") {
  std::mt19937_64 rng(6);
  SUBCASE("uniform logits give log C for any alpha") {
    for (double alpha : {0.0, 0.1, 0.7}) {
      Tape<double> t;
      const auto x = t.constant(1, 50, std::vector<double>(50, 0.3));
      CHECK(t.scalar(t.cross_entropy_smoothed(x, {7}, alpha)) == doctest::Approx(std::log(50.0)).epsilon(1e-12));
    }
  }
  SUBCASE("alpha zero is hard cross-entropy bitwise") {
    for (int trial = 0; trial < 100; ++trial) {
      Tape<float> t;
      const auto x = random_tensor(rng, 1, 40).cast<float>();
      const std::uint32_t target = rng() % 40;
      const float loss = t.scalar(t.cross_entropy_smoothed(t.constant(x), {target}, 0.0f));
      const float hard = -(x.values[target] - log_sum_exp<float>(x.values));
      CHECK(std::bit_cast<std::uint32_t>(loss) == std::bit_cast<std::uint32_t>(hard));
    }
  }
  SUBCASE("matches the explicit weighted sum") {
    Tape<double> t;
    const auto x = random_tensor(rng, 1, 6);
    const auto y = smoothed_targets<double>(2, 0.3, 6);
    const double lse = log_sum_exp<double>(x.values);
    double expect = 0;
    for (int c = 0; c < 6; ++c) expect -= y[c] * (x.values[c] - lse);
    CHECK(t.scalar(t.cross_entropy_smoothed(t.constant(x), {2}, 0.3)) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("errors") {
    Tape<double> t;
    const auto x = t.constant(1, 3, {0, 0, 0});
    CHECK_THROWS_AS(t.cross_entropy_smoothed(x, {3}, 0.0), IntegrityError);
    CHECK_THROWS_AS(t.cross_entropy_smoothed(x, {0}, 1.0), ConfigError);
  }
}

TEST_CASE("backward") {
  Tape<double> t;
  Tensor<double> w({1, 1}, 3.0);
  const auto v = t.leaf(w);
  const auto loss = t.sum(t.row_scale(v, v));  // w^2
  t.backward(loss);
  CHECK(t.grad(v)[0] == doctest::Approx(6.0));
  Tape<double> t2;
  const auto m = t2.leaf(w);
  CHECK_THROWS_AS(t2.backward(t2.matmul(t2.constant(2, 1, {1, 1}), m)), ShapeError);
}

TEST_CASE("AdamW") {
  SUBCASE("first step moves by about lr in the gradient sign") {
    for (double w0 : {0.7, -2.0}) {
      Tensor<double> w({1, 1}, w0);
      AdamW<double> opt({.lr = 0.01, .weight_decay = 0.0});
      Tensor<double>* params[] = {&w};
      opt.init(params);
      opt.step(params, {{2.0 * w0}}, 0);
      // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
      const double g = 2.0 * w0;
      CHECK(w.values[0] == doctest::Approx(w0 - 0.01 * g / (std::abs(g) + 1e-8)).epsilon(1e-14));
      CHECK(std::abs(w.values[0] - (w0 - 0.01 * (w0 > 0 ? 1 : -1))) < 1e-7);
    }
  }
  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    Tensor<float> w({2, 2}, std::vector<float>{1, -2, 3, 0.5f});
    const auto before = w;
    AdamW<float> opt({.weight_decay = 0.0});
    Tensor<float>* params[] = {&w};
    opt.init(params);
    for (int i = 0; i < 5; ++i) opt.step(params, {{0, 0, 0, 0}}, i);
    CHECK(w == before);
  }
  SUBCASE("weight decay is decoupled") {
    Tensor<double> w({1, 1}, 2.0);
    AdamW<double> opt({.lr = 0.1, .weight_decay = 0.5});
    Tensor<double>* params[] = {&w};
    opt.init(params);
    opt.step(params, {{0.0}}, 0);
    CHECK(w.values[0] == doctest::Approx(2.0 * (1 - 0.1 * 0.5)));
  }
  SUBCASE("learning-rate decay per epoch") {
    AdamW<double> opt({.lr = 1e-4});
    CHECK(opt.learning_rate(0) == 1e-4);
    CHECK(opt.learning_rate(2) == doctest::Approx(1e-4 * 0.997 * 0.997).epsilon(1e-15));
  }
  SUBCASE("step before init") {
    AdamW<double> opt;
    Tensor<double> w({1, 1}, 1.0);
    Tensor<double>* params[] = {&w};
    CHECK_THROWS(opt.step(params, {{1.0}}, 0));
  }
  SUBCASE("global norm clipping") {
    std::vector<std::vector<double>> g{{3.0}, {4.0}};
    CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g[0][0] == doctest::Approx(0.6));
    CHECK(g[1][0] == doctest::Approx(0.8));
  }
}

TEST_CASE("identical inputs give bit-identical outputs") {
  auto run = [] {
    std::mt19937_64 rng(9);
    Tape<float> t;
    const auto a = t.constant(random_tensor(rng, 6, 5).cast<float>());
    const auto b = t.constant(random_tensor(rng, 5, 4).cast<float>());
    const auto x = t.dropout(t.gelu(t.matmul(a, b)), 0.2, rng, true);
    const auto v = t.value(x);
    return std::vector<float>(v.begin(), v.end());
  };
  CHECK(run() == run());
}

}  // TEST_SUITE
