#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "hemocnn/errors.hpp"
#include "hemocnn/model.hpp"
#include "hemocnn/optimize.hpp"
#include "hemocnn/rng.hpp"
#include "hemocnn/tensor.hpp"

using namespace hemocnn;

namespace {

Tensor<double> row2(double a, double b) {
  return Tensor<double>(Shape{1, 2}, {a, b});
}

// One-hot targets for a batch, hot column per row.
Tensor<double> one_hot(const std::vector<std::size_t>& hot, std::size_t k) {
  Tensor<double> t(Shape{hot.size(), k});
  for (std::size_t r = 0; r < hot.size(); ++r) t[r * k + hot[r]] = 1.0;
  return t;
}

}  // namespace

TEST_CASE("bce on a fifty-fifty prediction equals ln 2") {
  const auto loss = bce_loss(row2(0.5, 0.5), row2(1.0, 0.0));
  CHECK(loss.value == doctest::Approx(0.6931471805599453).epsilon(1e-12));
  // (p - t) / (p (1 - p)) / (batch * outputs) with p = 1/2.
  CHECK(loss.grad[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(loss.grad[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bce at a perfect prediction sits at the clamp floor") {
  // Exact hits and over-confident values clamp to the same probabilities,
  // so both stay a hair above zero instead of producing log(0).
  const auto exact = bce_loss(row2(1.0, 0.0), row2(1.0, 0.0));
  CHECK(exact.value > 0.0);
  CHECK(exact.value < 1.1e-7);

  const auto bound = bce_loss(row2(1.0 - 1e-7, 1e-7), row2(1.0, 0.0));
  CHECK(bound.value == doctest::Approx(exact.value).epsilon(1e-9));
}

TEST_CASE("gradient through the producing sigmoid vanishes at a perfect hit") {
  // The raw dL/dp at a clamped perfect prediction is order 1, but the factor
  // p(1-p) from the sigmoid that produced p collapses the chained gradient
  // to (p - t) / (batch * outputs), which is at the clamp distance.
  const auto loss = bce_loss(row2(1.0, 0.0), row2(1.0, 0.0));
  const double clamped[2] = {1.0 - 1e-7, 1e-7};
  for (std::size_t i = 0; i < 2; ++i) {
    const double chained = loss.grad[i] * clamped[i] * (1.0 - clamped[i]);
    CHECK(std::abs(chained) < 1e-6);
  }
}

TEST_CASE("bce value is the mean over batch and outputs") {
  Tensor<double> p(Shape{2, 2}, {0.8, 0.3, 0.4, 0.9});
  Tensor<double> t = one_hot({0, 1}, 2);
  const auto both = bce_loss(p, t);

  const auto first = bce_loss(row2(0.8, 0.3), row2(1.0, 0.0));
  const auto second = bce_loss(row2(0.4, 0.9), row2(0.0, 1.0));
  CHECK(both.value ==
        doctest::Approx(0.5 * (first.value + second.value)).epsilon(1e-12));
  // Per-element gradients shrink with the batch: same p, half the weight.
  CHECK(both.grad[0] == doctest::Approx(0.5 * first.grad[0]).epsilon(1e-12));
  CHECK(both.grad[3] == doctest::Approx(0.5 * second.grad[1]).epsilon(1e-12));
}

TEST_CASE("bce gradient matches central finite differences") {
  Rng rng(901);
  for (const std::size_t k : {std::size_t{2}, std::size_t{3}}) {
    const std::size_t batch = 5;
    Tensor<double> p(Shape{batch, k});
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.uniform(0.05, 0.95);
    std::vector<std::size_t> hot(batch);
    for (auto& h : hot) h = rng.below(k);
    const Tensor<double> t = one_hot(hot, k);

    const auto analytic = bce_loss(p, t);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < p.size(); ++i) {
      Tensor<double> probe = p;
      probe[i] = p[i] + eps;
      const double up = bce_loss(probe, t).value;
      probe[i] = p[i] - eps;
      const double down = bce_loss(probe, t).value;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom =
          std::max({std::abs(analytic.grad[i]), std::abs(numeric), 1e-12});
      CHECK(std::abs(analytic.grad[i] - numeric) / denom < 1e-6);
    }
  }
}

TEST_CASE("bce rejects targets that are not one-hot") {
  const Tensor<double> p = row2(0.5, 0.5);
  CHECK_THROWS_AS(bce_loss(p, row2(1.0, 1.0)), DataError);
  CHECK_THROWS_AS(bce_loss(p, row2(0.0, 0.0)), DataError);
  CHECK_THROWS_AS(bce_loss(p, row2(0.5, 0.5)), DataError);
  CHECK_THROWS_AS(bce_loss(p, row2(2.0, -1.0)), DataError);
}

TEST_CASE("bce and accuracy reject mismatched or non-matrix shapes") {
  const Tensor<double> p(Shape{2, 2}, 0.5);
  const Tensor<double> wide(Shape{2, 3}, 0.5);
  const Tensor<double> flat(Shape{4}, 0.5);
  const Tensor<double> cube(Shape{2, 2, 1}, 0.5);
  CHECK_THROWS_AS(bce_loss(p, wide), ShapeError);
  CHECK_THROWS_AS(bce_loss(flat, flat), ShapeError);
  CHECK_THROWS_AS(bce_loss(cube, cube), ShapeError);
  CHECK_THROWS_AS(accuracy(p, wide), ShapeError);
  CHECK_THROWS_AS(accuracy(flat, flat), ShapeError);
}

TEST_CASE("accuracy counts argmax agreement per row") {
  Tensor<double> p(Shape{4, 2}, {0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7});
  Tensor<double> t = one_hot({0, 1, 1, 1}, 2);
  CHECK(accuracy(p, t) == doctest::Approx(0.75));
  CHECK(accuracy(t, t) == doctest::Approx(1.0));
}

TEST_CASE("accuracy ties break to the lower index") {
  Tensor<double> p(Shape{2, 2}, 0.5);
  Tensor<double> t = one_hot({0, 1}, 2);
  // Both rows resolve to index 0, matching only the first target.
  CHECK(accuracy(p, t) == doctest::Approx(0.5));
}

TEST_CASE("accuracy is exact against a one-hot of its own argmax") {
  Rng rng(77);
  for (const std::size_t k : {std::size_t{2}, std::size_t{5}}) {
    Tensor<double> p(Shape{16, k});
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.uniform01();
    std::vector<std::size_t> hot(16);
    for (std::size_t r = 0; r < 16; ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (p[r * k + c] > p[r * k + best]) best = c;
      }
      hot[r] = best;
    }
    CHECK(accuracy(p, one_hot(hot, k)) == doctest::Approx(1.0));
  }
}

TEST_CASE("rmsprop single step matches the hand-derived value") {
  SUBCASE("double") {
    Tensor<double> w(Shape{1}, 1.0);
    Tensor<double> g(Shape{1}, 1.0);
    Tensor<double> v(Shape{1}, 0.0);
    rmsprop_update(w, g, v, RmsPropConfig{});
    // v = 0.9*0 + 0.1*1 = 0.1; w = 1 - 0.001/(sqrt(0.1) + 1e-7).
    CHECK(v[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(w[0] == doctest::Approx(0.9968377223).epsilon(1e-9));
  }
  SUBCASE("float") {
    Tensor<float> w(Shape{1}, 1.0f);
    Tensor<float> g(Shape{1}, 1.0f);
    Tensor<float> v(Shape{1}, 0.0f);
    rmsprop_update(w, g, v, RmsPropConfig{});
    CHECK(v[0] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(w[0] == doctest::Approx(0.9968377).epsilon(1e-6));
  }
}

TEST_CASE("zero gradient decays the accumulator and leaves the weight alone") {
  Tensor<double> w(Shape{1}, 2.0);
  Tensor<double> g(Shape{1}, 0.0);
  Tensor<double> v(Shape{1}, 0.04);
  rmsprop_update(w, g, v, RmsPropConfig{});
  CHECK(w[0] == 2.0);
  CHECK(v[0] == doctest::Approx(0.036).epsilon(1e-12));
}

TEST_CASE("zero learning rate updates state but not parameters") {
  Rng rng(5);
  Tensor<double> w(Shape{7});
  Tensor<double> g(Shape{7});
  for (std::size_t i = 0; i < 7; ++i) {
    w[i] = rng.uniform(-1.0, 1.0);
    g[i] = rng.uniform(-1.0, 1.0);
  }
  const Tensor<double> before = w;
  Tensor<double> v(Shape{7}, 0.0);
  RmsPropConfig cfg;
  cfg.learning_rate = 0.0;
  rmsprop_update(w, g, v, cfg);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(w[i] == before[i]);
    CHECK(v[i] == doctest::Approx(0.1 * g[i] * g[i]).epsilon(1e-12));
  }
}

TEST_CASE("step size approaches the learning rate under a constant gradient") {
  // v converges to g^2, so each step shrinks toward lr * sign(g).
  for (const double g_val : {1.0, -2.0}) {
    Tensor<double> w(Shape{1}, 0.0);
    Tensor<double> g(Shape{1}, g_val);
    Tensor<double> v(Shape{1}, 0.0);
    const RmsPropConfig cfg;
    double prev = w[0];
    double step = 0.0;
    for (int i = 0; i < 300; ++i) {
      rmsprop_update(w, g, v, cfg);
      step = w[0] - prev;
      prev = w[0];
    }
    const double expected = -cfg.learning_rate * (g_val > 0 ? 1.0 : -1.0);
    CHECK(std::abs(step - expected) < 0.01 * cfg.learning_rate);
  }
}

TEST_CASE("rmsprop rejects mismatched shapes") {
  Tensor<double> w(Shape{2}, 0.0);
  Tensor<double> g(Shape{3}, 0.0);
  Tensor<double> v(Shape{2}, 0.0);
  CHECK_THROWS_AS(rmsprop_update(w, g, v, RmsPropConfig{}), ShapeError);
  Tensor<double> g2(Shape{2}, 0.0);
  Tensor<double> v3(Shape{3}, 0.0);
  CHECK_THROWS_AS(rmsprop_update(w, g2, v3, RmsPropConfig{}), ShapeError);
}

TEST_CASE("rmsprop config validation") {
  RmsPropConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = 0.0;
  CHECK_NOTHROW(cfg.validate());

  auto reject = [](auto mutate) {
    RmsPropConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  };
  reject([](RmsPropConfig& c) { c.learning_rate = -0.1; });
  reject([](RmsPropConfig& c) { c.learning_rate = std::nan(""); });
  reject([](RmsPropConfig& c) { c.rho = 0.0; });
  reject([](RmsPropConfig& c) { c.rho = 1.0; });
  reject([](RmsPropConfig& c) { c.rho = 1.5; });
  reject([](RmsPropConfig& c) { c.epsilon = 0.0; });
  reject([](RmsPropConfig& c) { c.epsilon = -1e-7; });

  RmsPropConfig bad;
  bad.rho = 0.0;
  CHECK_THROWS_AS(RmsProp<float>{bad}, ConfigError);
}

TEST_CASE("optimizer accumulators persist across steps by name") {
  Tensor<double> w(Shape{1}, 1.0);
  Tensor<double> g(Shape{1}, 1.0);
  Tensor<double> zero(Shape{1}, 0.0);
  RmsProp<double> opt;
  std::vector<ParamRef<double>> refs{{"w", &w, &g}};
  opt.step(refs);
  opt.step(refs);

  // Replaying the same two updates against one persistent accumulator must
  // land on the same parameter; a fresh accumulator per step would not.
  Tensor<double> w2(Shape{1}, 1.0);
  Tensor<double> v(Shape{1}, 0.0);
  rmsprop_update(w2, g, v, RmsPropConfig{});
  rmsprop_update(w2, g, v, RmsPropConfig{});
  CHECK(w[0] == w2[0]);

  Tensor<double> w_fresh(Shape{1}, 1.0);
  Tensor<double> v1(Shape{1}, 0.0);
  rmsprop_update(w_fresh, g, v1, RmsPropConfig{});
  Tensor<double> v2(Shape{1}, 0.0);
  rmsprop_update(w_fresh, g, v2, RmsPropConfig{});
  CHECK(w[0] != w_fresh[0]);
}

TEST_CASE("optimizer flags a parameter that changes shape") {
  Tensor<double> w1(Shape{1}, 0.0);
  Tensor<double> g1(Shape{1}, 0.0);
  RmsProp<double> opt;
  opt.step({{"w", &w1, &g1}});

  Tensor<double> w2(Shape{2}, 0.0);
  Tensor<double> g2(Shape{2}, 0.0);
  std::vector<ParamRef<double>> refs{{"w", &w2, &g2}};
  CHECK_THROWS_AS(opt.step(refs), StateError);
}

TEST_CASE("full-batch rmsprop drives bce down monotonically") {
  // Two linearly separable clusters, dense + sigmoid head, no dropout:
  // every one of 50 full-batch steps must lower the loss.
  for (const std::uint64_t seed : {3ull, 4ull, 5ull}) {
    Rng data_rng(derive_seed(900, seed));
    Tensor<double> x(Shape{8, 6});
    std::vector<std::size_t> hot(8);
    for (std::size_t r = 0; r < 8; ++r) {
      hot[r] = r % 2;
      for (std::size_t c = 0; c < 6; ++c) {
        x[r * 6 + c] = hot[r] == 0 ? data_rng.uniform(0.0, 0.3)
                                   : data_rng.uniform(0.7, 1.0);
      }
    }
    const Tensor<double> t = one_hot(hot, 2);

    SequentialModel<double> model(Shape{6}, seed);
    model.add(std::make_unique<Dense<double>>(2));
    model.add(std::make_unique<Sigmoid<double>>());
    RmsProp<double> opt;

    std::vector<double> losses;
    for (int i = 0; i < 50; ++i) {
      const auto pred = model.forward(x, TrainMode::training);
      const auto loss = bce_loss(pred, t);
      losses.push_back(loss.value);
      model.zero_grads();
      model.backward(loss.grad);
      opt.step(model.params());
    }
    for (std::size_t i = 1; i < losses.size(); ++i) {
      CHECK(losses[i] < losses[i - 1]);
    }
  }
}
