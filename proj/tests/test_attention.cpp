#include "doctest.h"

#include <cmath>
#include <random>

#include "matte/attention.hpp"
#include "matte/grad_check.hpp"
#include "oracles.hpp"

using namespace matte;

namespace {

AttentionBlockParams<double> random_block(std::size_t channels, std::uint64_t seed) {
  auto p = AttentionBlockParams<double>::zeros(channels, channels / 2);
  std::mt19937_64 rng(seed);
  he_init(p, rng);
  for (auto& b : p.branches) {
    b.group_conv.bias = oracle::random_tensor(rng, b.group_conv.bias.shape(), -0.1, 0.1);
    b.norm_gamma = oracle::random_tensor(rng, b.norm_gamma.shape(), 0.5, 1.5);
    b.norm_beta = oracle::random_tensor(rng, b.norm_beta.shape(), -0.2, 0.2);
  }
  return p;
}

std::vector<Image*> block_tensors(AttentionBlockParams<double>& p) {
  std::vector<Image*> out;
  for (auto& b : p.branches) {
    for (Image* t : {&b.group_conv.weight, &b.group_conv.bias, &b.norm_gamma, &b.norm_beta,
                     &b.pointwise_reduce.weight, &b.pointwise_reduce.bias, &b.pointwise_out.weight,
                     &b.pointwise_out.bias})
      out.push_back(t);
  }
  return out;
}

Image window_softmax_of_sigmoid(const Image& raw) {
  Image out(raw.shape());
  for (std::size_t y = 0; y < raw.height(); y += 2)
    for (std::size_t x = 0; x < raw.width(); x += 2) {
      double s[4];
      double z = 0.0;
      for (int k = 0; k < 4; ++k) {
        s[k] = std::exp(1.0 / (1.0 + std::exp(-raw(y + k / 2, x + k % 2))));
        z += s[k];
      }
      for (int k = 0; k < 4; ++k) out(y + k / 2, x + k % 2) = s[k] / z;
    }
  return out;
}

}  // namespace

TEST_CASE("attention block examples") {
  std::mt19937_64 rng(1);
  const Image f = oracle::random_tensor(rng, {8, 6, 4});
  const auto zero = AttentionBlockParams<double>::zeros(4, 2);
  const Image raw0 = attention_block_forward(f, zero);
  CHECK(raw0.shape() == Shape{8, 6, 1});
  for (const double v : raw0.vec()) CHECK(v == 0.0);

  const auto p = random_block(4, 3);
  CHECK(attention_block_forward(f, p) == attention_block_forward(f, random_block(4, 3)));
  CHECK_THROWS_AS(attention_block_forward(Image(7, 6, 4), p), ShapeError);
  CHECK_THROWS_AS(attention_block_forward(Image(8, 6, 2), p), ShapeError);
}

TEST_CASE("pixel-shuffled branches occupy their own sub-lattice") {
  std::mt19937_64 rng(2);
  const Image f = oracle::random_tensor(rng, {6, 6, 4});
  auto p = AttentionBlockParams<double>::zeros(4, 2);
  p.branches[1].pointwise_out.bias[0] = 3.0;  // branch 1 -> offset (0, 1)
  const Image raw = attention_block_forward(f, p);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) CHECK(raw(y, x) == ((y % 2 == 0 && x % 2 == 1) ? 3.0 : 0.0));
}

TEST_CASE("normalize_encoder and normalize_decoder examples") {
  for (const double v : std::vector<double>(normalize_encoder(Image(4, 4, 1)).vec())) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  const Image block(Shape{2, 2, 1}, {10, -10, -10, -10});
  const Image enc = normalize_encoder(block);
  CHECK(enc[0] == doctest::Approx(0.4754).epsilon(1e-3));
  for (int i = 1; i < 4; ++i) CHECK(enc[i] == doctest::Approx(0.1749).epsilon(1e-3));
  CHECK(oracle::max_abs_diff(enc, window_softmax_of_sigmoid(block)) <= 1e-15);

  for (const double v : std::vector<double>(normalize_decoder(Image(2, 2, 1)).vec())) CHECK(v == 0.5);
  for (const double v : std::vector<double>(normalize_decoder(Image(2, 2, 1, 20.0)).vec())) CHECK(std::abs(v - 1.0) <= 1e-8);

  std::mt19937_64 rng(4);
  const Image raw = oracle::random_tensor(rng, {6, 8, 1}, -5, 5);
  CHECK(oracle::max_abs_diff(normalize_encoder(raw), window_softmax_of_sigmoid(raw)) <= 1e-14);
}

TEST_CASE("guided_pool examples") {
  std::mt19937_64 rng(5);
  const Image f = oracle::random_tensor(rng, {6, 4, 3});
  const Image avg = guided_pool(f, Image(6, 4, 1, 0.25));
  Image ref = sum_pool(f, 2, 2);
  for (auto& v : ref.vec()) v *= 0.25;
  CHECK(oracle::max_abs_diff(avg, ref) <= 1e-15);

  const Image enc = normalize_encoder(oracle::random_tensor(rng, {6, 4, 1}, -4, 4));
  for (const double v : std::vector<double>(guided_pool(Image(6, 4, 3, 0.7), enc).vec())) CHECK(v == 0.7);

  const Image out = guided_pool(f, enc);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 2; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
          const std::size_t yy = 2 * y + k / 2;
          const std::size_t xx = 2 * x + k % 2;
          acc += f(yy, xx, c) * enc(yy, xx);
        }
        CHECK(std::abs(out(y, x, c) - acc) <= 1e-15);
      }
  CHECK_THROWS_AS(guided_pool(f, Image(6, 2, 1)), ShapeError);
  CHECK_THROWS_AS(guided_pool(Image(5, 4, 3), Image(5, 4, 1)), ShapeError);
}

TEST_CASE("guided_unpool examples") {
  const Image d(1, 1, 1, 2.0);
  const Image dec(Shape{2, 2, 1}, {0.1, 0.2, 0.3, 0.4});
  CHECK(guided_unpool(d, dec) == Image(Shape{2, 2, 1}, {0.2, 0.4, 0.6, 0.8}));

  std::mt19937_64 rng(6);
  const Image f = oracle::random_tensor(rng, {3, 2, 4});
  CHECK(guided_unpool(f, Image(6, 4, 1, 1.0)) == nearest_upsample(f, 2));
  Image half = nearest_upsample(f, 2);
  for (auto& v : half.vec()) v *= 0.5;
  CHECK(guided_unpool(f, Image(6, 4, 1, 0.5)) == half);
  CHECK_THROWS_AS(guided_unpool(f, Image(6, 6, 1)), ShapeError);
}

TEST_CASE("attention path gradients pass central differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(100 + seed);
    auto p = random_block(4, seed);
    const Image f = oracle::random_tensor(rng, {4, 4, 4});
    const Image probe = oracle::random_tensor(rng, {2, 2, 4});
    GradCheckOptions opts;
    opts.eps = 1e-6;
    const auto r = grad_check(
        [&](Graph<double>& g, const std::vector<Var>& v) {
          ParamBinder<double> bind(g, false);
          const Var raw = attention_block_forward(g, bind, v[0], p);
          return weighted_sum(g, guided_pool(g, v[0], normalize_encoder(g, raw)), probe);
        },
        {f}, opts);
    CHECK(r.max_relative_error <= 1e-4);

    const auto pc = oracle::check_param_grads(
        block_tensors(p),
        [&](Graph<double>& g, ParamBinder<double>& bind) {
          const Var x = g.leaf(f, false);
          const Var raw = attention_block_forward(g, bind, x, p);
          return weighted_sum(g, guided_pool(g, x, normalize_encoder(g, raw)), probe);
        },
        rng, 6);
    CHECK(pc.max_rel <= 1e-4);

    const Image small = oracle::random_tensor(rng, {2, 2, 3});
    const Image probe_up = oracle::random_tensor(rng, {4, 4, 3});
    const auto ru = grad_check(
        [&](Graph<double>& g, const std::vector<Var>& v) {
          return weighted_sum(g, guided_unpool(g, v[0], normalize_decoder(g, v[1])), probe_up);
        },
        {small, oracle::random_tensor(rng, {4, 4, 1}, -3, 3)}, opts);
    CHECK(ru.max_relative_error <= 1e-4);
  }
}
