#include "doctest.h"

#include <cmath>
#include <random>

#include "matte/grad_check.hpp"
#include "matte/graph.hpp"
#include "matte/ops.hpp"
#include "oracles.hpp"

using namespace matte;

namespace {

ConvSpec<double> random_conv(std::mt19937_64& rng, std::size_t in, std::size_t out, ConvGeometry geo) {
  auto spec = ConvSpec<double>::zeros(in, out, geo);
  spec.weight = oracle::random_tensor(rng, spec.weight.shape());
  spec.bias = oracle::random_tensor(rng, spec.bias.shape());
  return spec;
}

// Inputs bounded away from zero so finite differences never straddle a ReLU kink.
Image away_from_zero(std::mt19937_64& rng, Shape s) {
  Image t = oracle::random_tensor(rng, s, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (sign(rng)) t[i] = -t[i];
  return t;
}

}  // namespace

TEST_CASE("tensor construction checks data length") {
  CHECK_THROWS_AS(Tensor<double>(Shape{2, 2, 1}, std::vector<double>(3)), ShapeError);
  Tensor<float> t(2, 3, 4, 1.5f);
  CHECK(t.size() == 24);
  CHECK(t(1, 2, 3) == 1.5f);
  CHECK(t.cast<double>()(0, 0, 0) == 1.5);
}

TEST_CASE("conv2d examples") {
  SUBCASE("identity 1x1") {
    Image x(1, 1, 1, 5.0);
    auto spec = ConvSpec<double>::zeros(1, 1, ConvGeometry{});
    spec.weight.fill(1.0);
    CHECK(conv2d(x, spec)[0] == 5.0);
  }
  SUBCASE("zero weights annihilate") {
    std::mt19937_64 rng(3);
    const Image x = oracle::random_tensor(rng, {7, 5, 3});
    const auto spec = ConvSpec<double>::zeros(3, 4, ConvGeometry{3, 3, 1, 1, 1});
    const Image y = conv2d(x, spec);
    CHECK(y.shape() == Shape{7, 5, 4});
    for (const double v : y.vec()) CHECK(v == 0.0);
  }
  SUBCASE("4x4 ones kernel, stride 2, pad 1") {
    Image x(4, 4, 1, 1.0);
    auto spec = ConvSpec<double>::zeros(1, 1, ConvGeometry{4, 4, 2, 1, 1});
    spec.weight.fill(1.0);
    const Image y = conv2d(x, spec);
    REQUIRE(y.shape() == Shape{2, 2, 1});
    for (const double v : y.vec()) CHECK(v == 9.0);
  }
}

TEST_CASE("conv2d rejects bad shapes") {
  Image x(4, 4, 3);
  CHECK_THROWS_AS(ConvSpec<double>::zeros(3, 4, ConvGeometry{1, 1, 1, 0, 2}), ShapeError);
  const auto spec = ConvSpec<double>::zeros(2, 4, ConvGeometry{3, 3, 1, 1, 1});
  CHECK_THROWS_AS(conv2d(x, spec), ShapeError);
  auto big = ConvSpec<double>::zeros(3, 1, ConvGeometry{7, 7, 1, 0, 1});
  CHECK_THROWS_AS(conv2d(x, big), ShapeError);
}

TEST_CASE("conv2d matches direct summation on random grouped instances") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const std::size_t groups = 1 + (t % 2);
    const ConvGeometry geo{static_cast<std::size_t>(1 + t % 4), static_cast<std::size_t>(1 + (t / 2) % 4),
                           static_cast<std::size_t>(1 + t % 2), static_cast<std::size_t>(t % 3), groups};
    const auto spec = random_conv(rng, 2 * groups, 2 * groups + 2 * (t % 2), geo);
    const Image x = oracle::random_tensor(rng, {9, 10, 2 * groups});
    const Image y = conv2d(x, spec);
    const Image ref = oracle::direct_conv(x, spec.weight, spec.bias, geo);
    REQUIRE(y.shape() == ref.shape());
    CHECK(oracle::max_abs_diff(y, ref) <= 1e-10);
  }
}

TEST_CASE("group_norm examples") {
  const Image gamma(1, 1, 4, 1.0);
  SUBCASE("constant input collapses to beta") {
    Image x(3, 3, 4, 2.5);
    CHECK(oracle::max_abs_diff(group_norm(x, 2, 1e-5, gamma, Image(1, 1, 4, 0.0)), Image(3, 3, 4, 0.0)) == 0.0);
    const Image y = group_norm(x, 2, 1e-5, gamma, Image(1, 1, 4, 0.7));
    for (const double v : y.vec()) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
  }
  SUBCASE("random 2x2x2 matches direct statistics") {
    std::mt19937_64 rng(5);
    const Image x = oracle::random_tensor(rng, {2, 2, 2});
    const Image g2(1, 1, 2, 1.0);
    const Image b2(1, 1, 2, 0.0);
    const Image y = group_norm(x, 1, 1e-5, g2, b2);
    double mean = 0.0;
    for (const double v : x.vec()) mean += v / 8.0;
    double var = 0.0;
    for (const double v : x.vec()) var += (v - mean) * (v - mean) / 8.0;
    for (std::size_t i = 0; i < 8; ++i) CHECK(y[i] == doctest::Approx((x[i] - mean) / std::sqrt(var + 1e-5)));
  }
  CHECK_THROWS_AS(group_norm(Image(2, 2, 3), 2, 1e-5, Image(1, 1, 3, 1.0), Image(1, 1, 3)), ShapeError);
}

TEST_CASE("activation examples") {
  CHECK(activation(Image(1, 1, 1, 0.0), Activation::sigmoid)[0] == 0.5);
  CHECK(activation(Image(1, 1, 1, -3.2), Activation::relu)[0] == 0.0);
  CHECK(activation(Image(1, 1, 1, 2.0), Activation::relu)[0] == 2.0);
  Graph<double> g;
  const Var x = g.leaf(Image(1, 1, 1, 0.0));
  g.backward(sum(g, sigmoid(g, x)));
  CHECK(g.grad(x)[0] == doctest::Approx(0.25).epsilon(1e-15));
  const double numeric = (1.0 / (1.0 + std::exp(-1e-5)) - 1.0 / (1.0 + std::exp(1e-5))) / 2e-5;
  CHECK(numeric == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("window_softmax examples") {
  const Image uniform(2, 2, 1, 3.0);
  for (const double v : std::vector<double>(window_softmax(uniform, 2).vec())) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  const Image block(Shape{2, 2, 1}, {0, 0, 0, 10});
  const Image y = window_softmax(block, 2);
  const double denom = 3.0 + std::exp(10.0);
  for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / denom).epsilon(1e-12));
  CHECK(y[3] == doctest::Approx(std::exp(10.0) / denom).epsilon(1e-12));
  CHECK(y[0] == doctest::Approx(0.0000453).epsilon(1e-2));
  CHECK(y[3] == doctest::Approx(0.999864).epsilon(1e-6));

  std::mt19937_64 rng(8);
  const Image r = window_softmax(oracle::random_tensor(rng, {8, 6, 1}, -30, 30), 2);
  for (std::size_t by = 0; by < 4; ++by)
    for (std::size_t bx = 0; bx < 3; ++bx) {
      const double s = r(2 * by, 2 * bx) + r(2 * by, 2 * bx + 1) + r(2 * by + 1, 2 * bx) + r(2 * by + 1, 2 * bx + 1);
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  CHECK_THROWS_AS(window_softmax(Image(3, 4, 1), 2), ShapeError);
}

TEST_CASE("sum_pool, upsample and pixel shuffle examples") {
  CHECK(sum_pool(Image(2, 2, 1, 1.0), 2, 2)[0] == 4.0);
  CHECK_THROWS_AS(sum_pool(Image(3, 4, 1), 2, 2), ShapeError);

  std::mt19937_64 rng(2);
  const Image x = oracle::random_tensor(rng, {3, 5, 2});
  CHECK(nearest_upsample(x, 1) == x);
  const Image up = nearest_upsample(Image(1, 1, 1, 0.3), 2);
  CHECK(up == Image(2, 2, 1, 0.3));

  const Image a(1, 1, 1, 1.0), b(1, 1, 1, 2.0), c(1, 1, 1, 3.0), d(1, 1, 1, 4.0);
  const Image ps = pixel_shuffle_compose<double>({&a, &b, &c, &d});
  CHECK(ps == Image(Shape{2, 2, 1}, {1, 2, 3, 4}));
  const auto parts = pixel_shuffle_decompose(ps);
  CHECK(parts[2] == c);
  const Image wrong(2, 1, 1);
  CHECK_THROWS_AS(pixel_shuffle_compose<double>({&a, &b, &c, &wrong}), ShapeError);
}

TEST_CASE("sum_pool equals a ones-kernel convolution") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 10; ++t) {
    const std::size_t k = 1 + t % 3;
    const std::size_t s = 1 + (t / 3) % 2;
    const Image x = oracle::random_tensor(rng, {k * 4, k * 4, 3});
    if (k == s || (x.height() - k) % s == 0) {
      Image w(3, k * k, 1, 1.0);
      const Image ref = oracle::direct_conv(x, w, Image(), ConvGeometry{k, k, s, 0, 3});
      CHECK(oracle::max_abs_diff(sum_pool(x, k, s), ref) <= 1e-10);
    }
  }
}

TEST_CASE("backward examples") {
  std::mt19937_64 rng(4);
  const Image xv = oracle::random_tensor(rng, {3, 4, 2});
  {
    Graph<double> g;
    const Var x = g.leaf(xv);
    g.backward(sum(g, x));
    CHECK(g.grad(x) == Image(xv.shape(), 1.0));
  }
  {
    Graph<double> g;
    const Var x = g.leaf(xv);
    g.backward(sum(g, mul(g, x, x)));
    const Image gx = g.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i) CHECK(gx[i] == doctest::Approx(2.0 * xv[i]).epsilon(1e-15));
  }
  {
    Graph<double> g;
    CHECK_THROWS_AS(g.backward(Var{}), std::logic_error);
    const Var x = g.leaf(xv);
    CHECK_THROWS_AS(g.backward(x), ShapeError);
  }
  const auto spec = random_conv(rng, 2, 3, ConvGeometry{3, 3, 1, 1, 1});
  GradCheckOptions opts;
  opts.eps = 1e-6;
  const auto r = grad_check(
      [&](Graph<double>& g, const std::vector<Var>& v) {
        return sum(g, relu(g, conv2d(g, v[0], v[1], v[2], spec.geo)));
      },
      {away_from_zero(rng, {5, 5, 2}), spec.weight, spec.bias}, opts);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("grad_check examples") {
  std::mt19937_64 rng(9);
  CHECK(grad_check([](Graph<double>& g, Var x) { return sum(g, sigmoid(g, x)); },
                   oracle::random_tensor(rng, {3, 3, 1}), 1e-5) < 1e-6);

  const auto spec = random_conv(rng, 4, 4, ConvGeometry{4, 4, 2, 1, 2});
  const Image probe = oracle::random_tensor(rng, {4, 4, 4});
  const auto r = grad_check(
      [&](Graph<double>& g, const std::vector<Var>& v) {
        return weighted_sum(g, conv2d(g, v[0], v[1], v[2], spec.geo), probe);
      },
      {oracle::random_tensor(rng, {8, 8, 4}), spec.weight, spec.bias});
  CHECK(r.max_relative_error < 1e-4);

  CHECK_THROWS_AS(grad_check([](Graph<double>&, Var x) { return x; }, Image(2, 2, 1), 1e-4), ShapeError);
}

TEST_CASE("differentiable primitives pass central differences") {
  std::mt19937_64 rng(31);
  GradCheckOptions opts;
  opts.eps = 1e-6;
  auto check = [&](const LossBuilder& b, const std::vector<Image>& in) {
    const auto r = grad_check(b, in, opts);
    CHECK_MESSAGE(r.max_relative_error < 1e-4, "input " << r.worst_input << " index " << r.worst_index
                                                       << " analytic " << r.worst_analytic << " numeric "
                                                       << r.worst_numeric);
  };
  const Image w44 = oracle::random_tensor(rng, {4, 4, 1});
  const Image w44c = oracle::random_tensor(rng, {4, 4, 3});
  const Image w22c = oracle::random_tensor(rng, {2, 2, 3});
  const Image w444 = oracle::random_tensor(rng, {4, 4, 4});
  check([&](Graph<double>& g, const std::vector<Var>& v) {
          return weighted_sum(g, group_norm(g, v[0], v[1], v[2], 2, 1e-5), w444);
        },
        {oracle::random_tensor(rng, {4, 4, 4}), oracle::random_tensor(rng, {1, 1, 4}),
         oracle::random_tensor(rng, {1, 1, 4})});
  check([&](Graph<double>& g, const std::vector<Var>& v) {
          return weighted_sum(g, window_softmax(g, v[0], 2), w44);
        },
        {oracle::random_tensor(rng, {4, 4, 1}, -3, 3)});
  check([&](Graph<double>& g, const std::vector<Var>& v) {
          return weighted_sum(g, relu(g, v[0]), w44c);
        },
        {away_from_zero(rng, {4, 4, 3})});
  check([&](Graph<double>& g, const std::vector<Var>& v) { return weighted_sum(g, sum_pool(g, v[0], 2, 2), w22c); },
        {oracle::random_tensor(rng, {4, 4, 3})});
  check([&](Graph<double>& g, const std::vector<Var>& v) {
          return weighted_sum(g, nearest_upsample(g, v[0], 2), w44c);
        },
        {oracle::random_tensor(rng, {2, 2, 3})});
  check([&](Graph<double>& g, const std::vector<Var>& v) {
          return weighted_sum(g, pixel_shuffle_compose(g, std::array<Var, 4>{v[0], v[1], v[2], v[3]}), w44);
        },
        {oracle::random_tensor(rng, {2, 2, 1}), oracle::random_tensor(rng, {2, 2, 1}),
         oracle::random_tensor(rng, {2, 2, 1}), oracle::random_tensor(rng, {2, 2, 1})});
  check([&](Graph<double>& g, const std::vector<Var>& v) {
          return weighted_sum(g, mul_broadcast(g, v[0], v[1]), w44c);
        },
        {oracle::random_tensor(rng, {4, 4, 3}), oracle::random_tensor(rng, {4, 4, 1})});
  check([&](Graph<double>& g, const std::vector<Var>& v) {
          return weighted_sum(g, crop_to(g, concat_channels(g, pad_to(g, v[0], 5, 5), pad_to(g, v[1], 5, 5)), 4, 4),
                              w44c);
        },
        {oracle::random_tensor(rng, {4, 4, 1}), oracle::random_tensor(rng, {4, 4, 2})});
}

TEST_CASE("graph nodes without requires_grad are skipped") {
  Graph<double> g;
  const Var c = g.leaf(Image(2, 2, 1, 1.0), false);
  const Var x = g.leaf(Image(2, 2, 1, 2.0));
  g.backward(sum(g, mul(g, c, x)));
  CHECK(g.grad(x) == Image(2, 2, 1, 1.0));
  CHECK_THROWS_AS(g.grad(c), std::logic_error);
}
