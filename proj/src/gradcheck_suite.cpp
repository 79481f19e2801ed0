#include "matte/gradcheck_suite.hpp"

#include <algorithm>
#include <random>
#include <type_traits>
#include <utility>

#include "matte/attention.hpp"
#include "matte/grad_check.hpp"
#include "matte/losses.hpp"
#include "matte/net.hpp"

namespace matte {

namespace {

template <typename G>
struct graph_scalar;
template <typename T>
struct graph_scalar<Graph<T>> {
  using type = T;
};
template <typename G>
using scalar_of = typename graph_scalar<std::remove_cvref_t<G>>::type;

Tensor<double> uniform(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Values in [0.1, 1] with random sign, so ReLU kinks stay far from the probe.
Tensor<double> away_from_zero(std::mt19937_64& rng, Shape shape) {
  Tensor<double> t = uniform(rng, shape, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (sign(rng)) t[i] = -t[i];
  return t;
}

// Runs `f` (generic over the graph scalar) with the analytic side in double
// and the difference quotient in extended precision.
template <typename F>
GradCheckResult check(const F& f, const std::vector<Tensor<double>>& inputs, const GradCheckOptions& opts) {
  return grad_check([&](Graph<double>& g, const std::vector<Var>& v) { return f(g, v); },
                    [&](Graph<long double>& g, const std::vector<Var>& v) { return f(g, v); }, inputs, opts);
}

template <typename T>
std::vector<const Tensor<T>*> block_tensors(const AttentionBlockParams<T>& p) {
  std::vector<const Tensor<T>*> out;
  for (const auto& b : p.branches) {
    for (const Tensor<T>* t : {&b.group_conv.weight, &b.group_conv.bias, &b.norm_gamma, &b.norm_beta,
                               &b.pointwise_reduce.weight, &b.pointwise_reduce.bias, &b.pointwise_out.weight,
                               &b.pointwise_out.bias})
      out.push_back(t);
  }
  return out;
}

void fold(OperatorCheck& op, const GradCheckResult& r) {
  op.max_relative_error = std::max(op.max_relative_error, r.max_relative_error);
  op.coordinates += r.coordinates;
}

}  // namespace

std::vector<OperatorCheck> run_gradcheck_suite(const GradCheckSuiteOptions& opts) {
  const std::vector<std::string> names = {"conv2d",        "group_norm",      "relu",          "sigmoid",
                                          "window_softmax", "attention_block", "guided_pool",   "guided_unpool",
                                          "matting_forward", "alpha_loss",    "comp_loss"};
  std::vector<OperatorCheck> ops;
  for (const auto& n : names) ops.push_back({n, 0.0, opts.seeds, 0});

  GradCheckOptions gopts;
  gopts.eps = opts.eps;

  for (std::size_t s = 0; s < opts.seeds; ++s) {
    const std::uint64_t seed = opts.base_seed + s;
    std::mt19937_64 rng(seed * 7919 + 1);
    gopts.seed = seed;

    {  // conv2d: alternate a dense 3x3 and a grouped strided 4x4 geometry.
      const ConvGeometry geo = s % 2 == 0 ? ConvGeometry{3, 3, 1, 1, 1} : ConvGeometry{4, 4, 2, 1, 2};
      const std::size_t out = s % 2 == 0 ? 6 : 8;
      const std::size_t side = geo.out_dim(8, geo.kh);
      const auto probe = uniform(rng, {side, side, out}, -1, 1);
      const std::vector<Tensor<double>> in = {uniform(rng, {8, 8, 4}, -1, 1),
                                              uniform(rng, conv_weight_shape(4, out, geo), -1, 1),
                                              uniform(rng, {1, 1, out}, -1, 1)};
      fold(ops[0], check(
                       [&](auto& g, const std::vector<Var>& v) {
                         using T = scalar_of<decltype(g)>;
                         return weighted_sum(g, conv2d(g, v[0], v[1], v[2], geo), probe.cast<T>());
                       },
                       in, gopts));
    }
    {
      const auto probe = uniform(rng, {4, 4, 4}, -1, 1);
      fold(ops[1], check(
                       [&](auto& g, const std::vector<Var>& v) {
                         using T = scalar_of<decltype(g)>;
                         return weighted_sum(g, group_norm(g, v[0], v[1], v[2], 2, T(1e-5)), probe.cast<T>());
                       },
                       {uniform(rng, {4, 4, 4}, -1, 1), uniform(rng, {1, 1, 4}, 0.5, 1.5),
                        uniform(rng, {1, 1, 4}, -0.5, 0.5)},
                       gopts));
    }
    {
      const auto probe = uniform(rng, {4, 4, 3}, -1, 1);
      fold(ops[2], check(
                       [&](auto& g, const std::vector<Var>& v) {
                         using T = scalar_of<decltype(g)>;
                         return weighted_sum(g, relu(g, v[0]), probe.cast<T>());
                       },
                       {away_from_zero(rng, {4, 4, 3})}, gopts));
      fold(ops[3], check(
                       [&](auto& g, const std::vector<Var>& v) {
                         using T = scalar_of<decltype(g)>;
                         return weighted_sum(g, sigmoid(g, v[0]), probe.cast<T>());
                       },
                       {uniform(rng, {4, 4, 3}, -4, 4)}, gopts));
    }
    {
      const auto probe = uniform(rng, {4, 4, 1}, -1, 1);
      fold(ops[4], check(
                       [&](auto& g, const std::vector<Var>& v) {
                         using T = scalar_of<decltype(g)>;
                         return weighted_sum(g, window_softmax(g, v[0], 2), probe.cast<T>());
                       },
                       {uniform(rng, {4, 4, 1}, -3, 3)}, gopts));
    }
    {  // attention block: input features and every branch parameter.
      auto pd = AttentionBlockParams<double>::zeros(4, 2);
      he_init(pd, rng);
      const auto pl = AttentionBlockParams<long double>::zeros(4, 2);
      std::vector<Tensor<double>> in = {uniform(rng, {4, 4, 4}, -1, 1)};
      for (const auto* t : block_tensors(pd)) in.push_back(*t);
      // Zero biases put a ReLU exactly on its kink wherever its inputs are all
      // zero, so every bias and the norm affine get random values.
      for (std::size_t b = 0; b < 4; ++b) {
        for (const std::size_t k : {1, 3, 5, 7}) in[1 + 8 * b + k] = uniform(rng, in[1 + 8 * b + k].shape(), -0.1, 0.1);
        in[1 + 8 * b + 2] = uniform(rng, in[1 + 8 * b + 2].shape(), 0.5, 1.5);
      }
      const auto probe = uniform(rng, {4, 4, 1}, -1, 1);
      fold(ops[5], check(
                       [&](auto& g, const std::vector<Var>& v) {
                         using T = scalar_of<decltype(g)>;
                         ParamBinder<T> bind(g, false);
                         const auto& p = [&]() -> const AttentionBlockParams<T>& {
                           if constexpr (std::is_same_v<T, double>) return pd;
                           else return pl;
                         }();
                         const auto ts = block_tensors(p);
                         for (std::size_t k = 0; k < ts.size(); ++k) bind.bind(*ts[k], v[1 + k]);
                         return weighted_sum(g, attention_block_forward(g, bind, v[0], p), probe.cast<T>());
                       },
                       in, gopts));
    }
    {
      const auto probe = uniform(rng, {2, 2, 3}, -1, 1);
      fold(ops[6], check(
                       [&](auto& g, const std::vector<Var>& v) {
                         using T = scalar_of<decltype(g)>;
                         return weighted_sum(g, guided_pool(g, v[0], normalize_encoder(g, v[1])), probe.cast<T>());
                       },
                       {uniform(rng, {4, 4, 3}, -1, 1), uniform(rng, {4, 4, 1}, -3, 3)}, gopts));
      const auto probe_up = uniform(rng, {4, 4, 3}, -1, 1);
      fold(ops[7], check(
                       [&](auto& g, const std::vector<Var>& v) {
                         using T = scalar_of<decltype(g)>;
                         return weighted_sum(g, guided_unpool(g, v[0], normalize_decoder(g, v[1])),
                                             probe_up.cast<T>());
                       },
                       {uniform(rng, {2, 2, 3}, -1, 1), uniform(rng, {4, 4, 1}, -3, 3)}, gopts));
    }
    {  // Whole network into the training loss, alternating the ablation variant.
      NetConfig nc;
      nc.stages = 2;
      nc.base_channels = 4;
      nc.convs_per_stage = 1;
      nc.seed = seed;
      nc.attention = s % 2 == 0;
      auto pd = init_params<double>(nc);
      for (auto& [name, t] : pd.tensors()) {
        if (name.ends_with(".b") || name.ends_with(".beta")) *t = uniform(rng, t->shape(), -0.1, 0.1);
        if (name.ends_with(".gamma")) *t = uniform(rng, t->shape(), 0.5, 1.5);
      }
      const auto pl = pd.cast<long double>();
      Tensor<double> x = uniform(rng, {16, 16, 4}, 0, 1);
      std::uniform_int_distribution<int> lvl(0, 2);
      for (std::size_t i = 0; i < 256; ++i) x[i * 4 + 3] = 0.5 * lvl(rng);
      const auto gt = uniform(rng, {16, 16, 1}, 0, 1);
      const auto fg = uniform(rng, {16, 16, 3}, 0, 1);
      const auto bg = uniform(rng, {16, 16, 3}, 0, 1);
      const auto obs = composite(gt, fg, bg);
      // v[0] is the input; any further variables replace the parameters in order.
      const auto f = [&](auto& g, const std::vector<Var>& v) {
        using T = scalar_of<decltype(g)>;
        ParamBinder<T> bind(g, false);
        const auto& p = [&]() -> const NetParams<T>& {
          if constexpr (std::is_same_v<T, double>) return pd;
          else return pl;
        }();
        const auto ts = p.tensors();
        for (std::size_t k = 0; k + 1 < v.size(); ++k) bind.bind(*ts[k].second, v[1 + k]);
        const auto tr = forward(g, bind, v[0], p);
        return matting_loss(g, tr.raw_alpha, gt.cast<T>(), fg.cast<T>(), bg.cast<T>(), obs.cast<T>(), LossConfig{})
            .total;
      };
      GradCheckOptions po = gopts;
      po.samples_per_input = opts.net_samples_per_tensor;
      std::vector<Tensor<double>> in = {x};
      for (const auto& [name, t] : pd.tensors()) in.push_back(*t);
      fold(ops[8], check(f, in, po));
      GradCheckOptions xo = gopts;
      xo.samples_per_input = 64;
      fold(ops[8], check(f, {x}, xo));
    }
    {
      const auto gt = uniform(rng, {6, 6, 1}, 0, 1);
      const auto fg = uniform(rng, {6, 6, 3}, 0, 1);
      const auto bg = uniform(rng, {6, 6, 3}, 0, 1);
      const auto obs = composite(gt, fg, bg);
      const auto pred = uniform(rng, {6, 6, 1}, 0, 1);
      fold(ops[9], check(
                       [&](auto& g, const std::vector<Var>& v) {
                         using T = scalar_of<decltype(g)>;
                         return matting_loss(g, v[0], gt.cast<T>(), fg.cast<T>(), bg.cast<T>(), obs.cast<T>(),
                                             LossConfig{})
                             .alpha;
                       },
                       {pred}, gopts));
      fold(ops[10], check(
                        [&](auto& g, const std::vector<Var>& v) {
                          using T = scalar_of<decltype(g)>;
                          return matting_loss(g, v[0], gt.cast<T>(), fg.cast<T>(), bg.cast<T>(), obs.cast<T>(),
                                              LossConfig{})
                              .comp;
                        },
                        {pred}, gopts));
    }
  }
  return ops;
}

}  // namespace matte
