#include <doctest.h>

#include <cmath>
#include <functional>

#include "fixtures.hpp"
#include "hemocnn/errors.hpp"
#include "hemocnn/gradcheck.hpp"
#include "hemocnn/layers.hpp"
#include "hemocnn/model.hpp"

using namespace hemocnn;

namespace {

// Reference convolution: direct sliding window, accumulating in
// (kh, kw, channel) order with the bias added last, which is the same
// floating-point order the im2col path commits to.
template <typename T>
Tensor<T> direct_conv(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>& b) {
  const std::size_t n = x.shape()[0], h = x.shape()[1], wd = x.shape()[2],
                    c = x.shape()[3];
  const std::size_t kh = w.shape()[0], kw = w.shape()[1], f = w.shape()[3];
  const std::size_t oh = h - kh + 1, ow = wd - kw + 1;
  Tensor<T> y(Shape{n, oh, ow, f});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        for (std::size_t o = 0; o < f; ++o) {
          T sum{};
          for (std::size_t di = 0; di < kh; ++di) {
            for (std::size_t dj = 0; dj < kw; ++dj) {
              for (std::size_t ch = 0; ch < c; ++ch) {
                sum += x.at({s, i + di, j + dj, ch}) * w.at({di, dj, ch, o});
              }
            }
          }
          y.at({s, i, j, o}) = sum + b[o];
        }
      }
    }
  }
  return y;
}

// max finite-difference error for a small model built by `make`, probing
// every parameter entry with a squared-error head
double fd_max_err(const std::function<SequentialModel<double>(std::uint64_t)>& make,
                  std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  SequentialModel<double> m = make(seed);
  Rng rng(derive_seed(seed, 777));
  const std::size_t batch = 3;
  auto x = fixtures::random_tensor<double>(batched(batch, m.input_shape()), rng,
                                           lo, hi);
  auto targets = fixtures::random_tensor<double>(
      batched(batch, m.output_shape()), rng, -1.0, 1.0);
  GradCheckOptions opts;
  opts.loss = GradCheckLoss::squared_error;
  opts.seed = seed;
  return finite_difference_check(m, x, targets, opts).max_rel_err;
}

constexpr std::uint64_t kSeeds[] = {11, 12, 13, 14, 15};

}  // namespace

TEST_CASE("rescale divides by 255 and scales gradients the same way") {
  Rescale<float> layer;
  Rng rng(1);
  layer.build(Shape{3}, rng);

  Tensor<float> x(Shape{1, 3}, std::vector<float>{255.0f, 0.0f, 127.5f});
  const auto y = layer.forward(x, TrainMode::inference, rng);
  CHECK(y[0] == 1.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 0.5f);  // exact: division, not multiplication by 1/255

  Tensor<float> g(Shape{1, 3}, std::vector<float>{255.0f, 510.0f, 0.0f});
  const auto dx = layer.backward(g);
  CHECK(dx[0] == 1.0f);
  CHECK(dx[1] == 2.0f);
}

TEST_CASE("conv2d output shapes and parameter counts") {
  Rng rng(2);

  Conv2D<float> first(32);
  CHECK(first.output_shape(Shape{120, 160, 3}) == Shape{118, 158, 32});
  first.build(Shape{120, 160, 3}, rng);
  CHECK(first.param_count() == 896);

  Conv2D<float> third(32);
  third.build(Shape{28, 38, 32}, rng);
  CHECK(third.output_shape(Shape{28, 38, 32}) == Shape{26, 36, 32});
  CHECK(third.param_count() == 9248);

  Conv2D<float> last(64);
  last.build(Shape{13, 18, 32}, rng);
  CHECK(last.param_count() == 18496);

  CHECK_THROWS_AS(Conv2D<float>(8).output_shape(Shape{2, 9, 3}), ShapeError);
  CHECK_THROWS_AS(Conv2D<float>(0), ConfigError);

  // channel count is pinned at build time
  CHECK_THROWS_AS(third.output_shape(Shape{28, 38, 16}), ShapeError);
}

TEST_CASE("conv2d all-ones filter sums its window") {
  Conv2D<float> conv(1);
  Rng rng(3);
  conv.build(Shape{3, 3, 1}, rng);
  auto params = conv.params();
  params[0].value->fill(1.0f);  // W
  params[1].value->fill(0.0f);  // b

  Tensor<float> x(Shape{1, 3, 3, 1}, 1.0f);
  const auto y = conv.forward(x, TrainMode::inference, rng);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 9.0f);
}

TEST_CASE("conv2d forward matches the direct sliding window exactly") {
  Conv2D<double> conv(3);
  Rng rng(4);
  conv.build(Shape{6, 7, 2}, rng);

  auto x = fixtures::random_tensor<double>(Shape{2, 6, 7, 2}, rng);
  const auto got = conv.forward(x, TrainMode::inference, rng);
  const auto want =
      direct_conv(x, *conv.params()[0].value, *conv.params()[1].value);
  REQUIRE(got.shape() == want.shape());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i] == want[i]);  // same accumulation order end to end
  }
}

TEST_CASE("conv2d backward basics") {
  Conv2D<double> conv(3);
  Rng rng(5);
  conv.build(Shape{6, 6, 2}, rng);

  SUBCASE("zero upstream gradient produces zero everywhere") {
    auto x = fixtures::random_tensor<double>(Shape{1, 6, 6, 2}, rng);
    conv.forward(x, TrainMode::training, rng);
    const auto dx = conv.backward(Tensor<double>(Shape{1, 4, 4, 3}));
    for (std::size_t i = 0; i < dx.size(); ++i) CHECK(dx[i] == 0.0);
    for (auto& p : conv.params()) {
      for (std::size_t i = 0; i < p.grad->size(); ++i) {
        CHECK((*p.grad)[i] == 0.0);
      }
    }
  }

  SUBCASE("backward before forward is a state error") {
    CHECK_THROWS_AS(conv.backward(Tensor<double>(Shape{1, 4, 4, 3})),
                    StateError);
  }

  SUBCASE("single-pixel input: bias gradient equals the upstream value") {
    Conv2D<double> tiny(1, 1, 1);
    tiny.build(Shape{1, 1, 1}, rng);
    Tensor<double> x(Shape{1, 1, 1, 1}, 2.0);
    tiny.forward(x, TrainMode::training, rng);
    Tensor<double> g(Shape{1, 1, 1, 1}, 3.5);
    tiny.backward(g);
    CHECK((*tiny.params()[1].grad)[0] == 3.5);
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  auto make = [](std::uint64_t seed) {
    SequentialModel<double> m(Shape{6, 6, 2}, seed);
    m.add(std::make_unique<Conv2D<double>>(3));
    return m;
  };
  for (auto seed : kSeeds) {
    CHECK(fd_max_err(make, seed) < 1e-5);
  }
}

TEST_CASE("relu clamps negatives and kills the gradient at zero") {
  ReLU<float> layer;
  Rng rng(6);
  layer.build(Shape{3}, rng);

  Tensor<float> x(Shape{1, 3}, std::vector<float>{-1.0f, 0.0f, 2.0f});
  const auto y = layer.forward(x, TrainMode::inference, rng);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 2.0f);

  Tensor<float> g(Shape{1, 3}, std::vector<float>{5.0f, 5.0f, 5.0f});
  const auto dx = layer.backward(g);
  CHECK(dx[0] == 0.0f);
  CHECK(dx[1] == 0.0f);  // subgradient at exactly 0 chosen as 0
  CHECK(dx[2] == 5.0f);

  Tensor<float> pos(Shape{1, 3}, std::vector<float>{1.0f, 2.0f, 3.0f});
  const auto id = layer.forward(pos, TrainMode::inference, rng);
  for (std::size_t i = 0; i < id.size(); ++i) CHECK(id[i] == pos[i]);
}

TEST_CASE("relu backward matches finite differences behind a dense layer") {
  auto make = [](std::uint64_t seed) {
    SequentialModel<double> m(Shape{7}, seed);
    m.add(std::make_unique<Dense<double>>(4));
    m.add(std::make_unique<ReLU<double>>());
    return m;
  };
  for (auto seed : kSeeds) {
    CHECK(fd_max_err(make, seed) < 1e-4);
  }
}

TEST_CASE("maxpool output shapes use floor truncation") {
  MaxPool2D<float> pool;
  CHECK(pool.output_shape(Shape{118, 158, 32}) == Shape{59, 79, 32});
  CHECK(pool.output_shape(Shape{57, 77, 32}) == Shape{28, 38, 32});
  CHECK(pool.output_shape(Shape{2, 2, 1}) == Shape{1, 1, 1});
  CHECK_THROWS_AS(pool.output_shape(Shape{1, 4, 2}), ShapeError);
  CHECK_THROWS_AS(MaxPool2D<float>(0, 2, 2), ConfigError);
}

TEST_CASE("maxpool forward and argmax routing") {
  Rng rng(7);

  SUBCASE("max of a single window, gradient routed to it") {
    MaxPool2D<float> pool;
    pool.build(Shape{2, 2, 1}, rng);
    Tensor<float> x(Shape{1, 2, 2, 1}, std::vector<float>{1, 2, 3, 4});
    const auto y = pool.forward(x, TrainMode::inference, rng);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 4.0f);

    const auto dx = pool.backward(Tensor<float>(Shape{1, 1, 1, 1}, 1.0f));
    CHECK(dx[0] == 0.0f);
    CHECK(dx[1] == 0.0f);
    CHECK(dx[2] == 0.0f);
    CHECK(dx[3] == 1.0f);
  }

  SUBCASE("ties go to the first occurrence in row-major order") {
    MaxPool2D<float> pool;
    pool.build(Shape{2, 2, 1}, rng);
    Tensor<float> x(Shape{1, 2, 2, 1}, std::vector<float>{5, 5, 0, 0});
    const auto y = pool.forward(x, TrainMode::inference, rng);
    CHECK(y[0] == 5.0f);
    const auto dx = pool.backward(Tensor<float>(Shape{1, 1, 1, 1}, 1.0f));
    CHECK(dx[0] == 1.0f);
    CHECK(dx[1] == 0.0f);
    CHECK(dx[2] == 0.0f);
    CHECK(dx[3] == 0.0f);
  }

  SUBCASE("odd trailing rows and columns are dropped and get zero gradient") {
    MaxPool2D<float> pool;
    pool.build(Shape{5, 7, 2}, rng);
    auto x = fixtures::random_tensor<float>(Shape{2, 5, 7, 2}, rng, 0.0, 1.0);
    const auto y = pool.forward(x, TrainMode::inference, rng);
    REQUIRE(y.shape() == Shape{2, 2, 3, 2});

    Tensor<float> g(y.shape(), 1.0f);
    const auto dx = pool.backward(g);
    // last row (index 4) and last column (index 6) never participate
    for (std::size_t s = 0; s < 2; ++s) {
      for (std::size_t j = 0; j < 7; ++j) {
        for (std::size_t c = 0; c < 2; ++c) {
          CHECK(dx.at({s, 4, j, c}) == 0.0f);
        }
      }
      for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
          CHECK(dx.at({s, i, 6, c}) == 0.0f);
        }
      }
    }
  }

  SUBCASE("gradient is conserved on even dims") {
    MaxPool2D<double> pool;
    pool.build(Shape{4, 6, 3}, rng);
    auto x = fixtures::random_tensor<double>(Shape{2, 4, 6, 3}, rng);
    pool.forward(x, TrainMode::inference, rng);
    auto g = fixtures::random_tensor<double>(Shape{2, 2, 3, 3}, rng);
    const auto dx = pool.backward(g);
    CHECK(total_sum(dx) == doctest::Approx(total_sum(g)).epsilon(1e-12));
  }

  SUBCASE("backward before forward is a state error") {
    MaxPool2D<float> pool;
    pool.build(Shape{2, 2, 1}, rng);
    CHECK_THROWS_AS(pool.backward(Tensor<float>(Shape{1, 1, 1, 1})),
                    StateError);
  }
}

TEST_CASE("maxpool backward matches finite differences behind a conv layer") {
  auto make = [](std::uint64_t seed) {
    SequentialModel<double> m(Shape{5, 6, 3}, seed);
    m.add(std::make_unique<Conv2D<double>>(2));
    m.add(std::make_unique<MaxPool2D<double>>());
    return m;
  };
  for (auto seed : kSeeds) {
    CHECK(fd_max_err(make, seed) < 1e-4);
  }
}

TEST_CASE("flatten is a row-major round trip") {
  Flatten<float> layer;
  Rng rng(8);
  layer.build(Shape{2, 3, 2}, rng);

  CHECK(layer.output_shape(Shape{5, 8, 64}) == Shape{2560});
  CHECK(layer.output_shape(Shape{1, 1, 1}) == Shape{1});

  auto x = fixtures::random_tensor<float>(Shape{2, 2, 3, 2}, rng);
  const auto y = layer.forward(x, TrainMode::inference, rng);
  REQUIRE(y.shape() == Shape{2, 12});
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

  const auto back = layer.backward(y);
  REQUIRE(back.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(back[i] == x[i]);
}

TEST_CASE("flatten backward matches finite differences behind a conv layer") {
  auto make = [](std::uint64_t seed) {
    SequentialModel<double> m(Shape{4, 5, 3}, seed);
    m.add(std::make_unique<Conv2D<double>>(2));
    m.add(std::make_unique<Flatten<double>>());
    return m;
  };
  for (auto seed : kSeeds) {
    CHECK(fd_max_err(make, seed) < 1e-4);
  }
}

TEST_CASE("dense layer parameter counts and identity map") {
  Rng rng(9);

  Dense<float> wide(64);
  wide.build(Shape{2560}, rng);
  CHECK(wide.param_count() == 163904);

  Dense<float> head(2);
  head.build(Shape{64}, rng);
  CHECK(head.param_count() == 130);

  Dense<float> eye(2);
  eye.build(Shape{2}, rng);
  auto params = eye.params();
  params[0].value->fill(0.0f);
  params[0].value->at({0, 0}) = 1.0f;
  params[0].value->at({1, 1}) = 1.0f;
  params[1].value->fill(0.0f);
  Tensor<float> x(Shape{1, 2}, std::vector<float>{1.0f, 2.0f});
  const auto y = eye.forward(x, TrainMode::inference, rng);
  CHECK(y[0] == 1.0f);
  CHECK(y[1] == 2.0f);

  Tensor<float> bad(Shape{1, 3}, std::vector<float>{1, 2, 3});
  CHECK_THROWS_AS(eye.forward(bad, TrainMode::inference, rng), ShapeError);
  CHECK_THROWS_AS(Dense<float>(0), ConfigError);
}

TEST_CASE("dense gradients match finite differences") {
  auto make = [](std::uint64_t seed) {
    SequentialModel<double> m(Shape{7}, seed);
    m.add(std::make_unique<Dense<double>>(4));
    return m;
  };
  for (auto seed : kSeeds) {
    CHECK(fd_max_err(make, seed) < 1e-5);
  }
}

TEST_CASE("dropout") {
  Rng rng(10);

  SUBCASE("ratio outside [0,1) is rejected") {
    CHECK_THROWS_AS(Dropout<float>(1.0), ConfigError);
    CHECK_THROWS_AS(Dropout<float>(1.5), ConfigError);
    CHECK_THROWS_AS(Dropout<float>(-0.1), ConfigError);
  }

  SUBCASE("ratio 0 is the identity in both modes") {
    Dropout<float> layer(0.0);
    layer.build(Shape{4}, rng);
    auto x = fixtures::random_tensor<float>(Shape{2, 4}, rng);
    const auto train = layer.forward(x, TrainMode::training, rng);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(train[i] == x[i]);
    const auto infer = layer.forward(x, TrainMode::inference, rng);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(infer[i] == x[i]);
  }

  SUBCASE("inference mode is bitwise identity") {
    Dropout<float> layer(0.5);
    layer.build(Shape{64}, rng);
    auto x = fixtures::random_tensor<float>(Shape{4, 64}, rng);
    const auto y = layer.forward(x, TrainMode::inference, rng);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
    const auto dx = layer.backward(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(dx[i] == x[i]);
  }

  SUBCASE("training keeps the expectation: mean of 1e5 unit inputs in [0.98, 1.02]") {
    Dropout<float> layer(0.5);
    layer.build(Shape{100000}, rng);
    Tensor<float> x(Shape{1, 100000}, 1.0f);
    const auto y = layer.forward(x, TrainMode::training, rng);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const bool valid = y[i] == 0.0f || y[i] == 2.0f;  // 1/(1-0.5) scaling
      CHECK(valid);
      sum += y[i];
    }
    const double mean = sum / static_cast<double>(y.size());
    CHECK(mean > 0.98);
    CHECK(mean < 1.02);

    // backward reuses the identical mask
    const auto dx = layer.backward(x);
    // forward consumed nothing: compare against y (x was all ones)
    for (std::size_t i = 0; i < 1000; ++i) CHECK(dx[i] == y[i]);
  }
}

TEST_CASE("dropout backward matches finite differences with frozen masks") {
  auto make = [](std::uint64_t seed) {
    SequentialModel<double> m(Shape{10}, seed);
    m.add(std::make_unique<Dense<double>>(6));
    m.add(std::make_unique<Dropout<double>>(0.5));
    return m;
  };
  for (auto seed : kSeeds) {
    CHECK(fd_max_err(make, seed) < 1e-4);
  }
}

TEST_CASE("sigmoid saturates inside the open interval (0,1)") {
  Sigmoid<double> layer;
  Rng rng(11);
  layer.build(Shape{4}, rng);

  Tensor<double> x(Shape{1, 4}, std::vector<double>{0.0, -40.0, 1000.0, -1000.0});
  const auto y = layer.forward(x, TrainMode::inference, rng);
  CHECK(y[0] == 0.5);
  CHECK(y[1] > 0.0);
  CHECK(y[1] <= 1e-6);
  CHECK(y[2] < 1.0);
  CHECK(y[3] > 0.0);
  CHECK(layer.forward(x, TrainMode::inference, rng).all_finite());

  // gradient at x=0 is 0.25 * upstream
  Sigmoid<double> at_zero;
  at_zero.build(Shape{1}, rng);
  at_zero.forward(Tensor<double>(Shape{1, 1}), TrainMode::inference, rng);
  const auto dx = at_zero.backward(Tensor<double>(Shape{1, 1}, 8.0));
  CHECK(dx[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("sigmoid backward matches finite differences behind a dense layer") {
  auto make = [](std::uint64_t seed) {
    SequentialModel<double> m(Shape{7}, seed);
    m.add(std::make_unique<Dense<double>>(4));
    m.add(std::make_unique<Sigmoid<double>>());
    return m;
  };
  for (auto seed : kSeeds) {
    CHECK(fd_max_err(make, seed) < 1e-4);
  }
}

TEST_CASE("rescale backward matches finite differences behind a dense layer") {
  auto make = [](std::uint64_t seed) {
    SequentialModel<double> m(Shape{6}, seed);
    m.add(std::make_unique<Dense<double>>(4));
    m.add(std::make_unique<Rescale<double>>());
    return m;
  };
  for (auto seed : kSeeds) {
    CHECK(fd_max_err(make, seed) < 1e-4);
  }
}

TEST_CASE("glorot initialization is seeded and bounded") {
  Rng a(42), b(42), c(43);
  Conv2D<float> conv_a(4), conv_b(4), conv_c(4);
  conv_a.build(Shape{5, 5, 2}, a);
  conv_b.build(Shape{5, 5, 2}, b);
  conv_c.build(Shape{5, 5, 2}, c);

  const auto& wa = *conv_a.params()[0].value;
  const auto& wb = *conv_b.params()[0].value;
  const auto& wc = *conv_c.params()[0].value;

  // fan_in = 3*3*2, fan_out = 3*3*4
  const float limit = std::sqrt(6.0f / (18.0f + 36.0f));
  bool all_same = true, any_diff = false;
  float max_abs = 0.0f;
  for (std::size_t i = 0; i < wa.size(); ++i) {
    all_same = all_same && wa[i] == wb[i];
    any_diff = any_diff || wa[i] != wc[i];
    max_abs = std::max(max_abs, std::abs(wa[i]));
  }
  CHECK(all_same);
  CHECK(any_diff);
  CHECK(max_abs <= limit);
  CHECK(max_abs > 0.25f * limit);  // draws actually spread out

  // biases start at zero
  const auto& bias = *conv_a.params()[1].value;
  for (std::size_t i = 0; i < bias.size(); ++i) CHECK(bias[i] == 0.0f);
}

TEST_CASE("layer configs round-trip through the factory") {
  const LayerConfig conv_cfg{"conv2d",
                             {{"filters", 8}, {"kernel_h", 3}, {"kernel_w", 3}}};
  auto conv = make_layer<float>(conv_cfg);
  CHECK(conv->kind() == "conv2d");
  CHECK(conv->output_shape(Shape{10, 10, 3}) == Shape{8, 8, 8});

  for (const char* kind :
       {"rescale", "relu", "flatten", "sigmoid"}) {
    auto layer = make_layer<float>(LayerConfig{kind, {}});
    CHECK(layer->kind() == kind);
    // config() -> make_layer -> config() is stable
    CHECK(make_layer<float>(layer->config())->kind() == kind);
  }

  auto pool = make_layer<float>(
      LayerConfig{"maxpool2d", {{"pool_h", 2}, {"pool_w", 2}, {"stride", 2}}});
  CHECK(pool->output_shape(Shape{10, 10, 3}) == Shape{5, 5, 3});

  auto dense = make_layer<float>(LayerConfig{"dense", {{"units", 5}}});
  CHECK(dense->output_shape(Shape{7}) == Shape{5});

  auto drop = make_layer<float>(LayerConfig{"dropout", {{"ratio", 0.5}}});
  CHECK(drop->config().arg("ratio") == 0.5);

  CHECK_THROWS_AS(make_layer<float>(LayerConfig{"softmax", {}}), FormatError);
  CHECK_THROWS_AS(conv_cfg.arg("padding"), FormatError);
  CHECK(conv_cfg.has("filters"));
  CHECK_FALSE(conv_cfg.has("padding"));
}

TEST_CASE("layers reject batches that do not match their build shape") {
  Rng rng(12);
  ReLU<float> relu;
  relu.build(Shape{4}, rng);
  CHECK_THROWS_AS(
      relu.forward(Tensor<float>(Shape{2, 5}), TrainMode::inference, rng),
      ShapeError);
  CHECK_THROWS_AS(
      relu.forward(Tensor<float>(Shape{4}), TrainMode::inference, rng),
      ShapeError);  // missing batch dimension
}
