#include "matte/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

namespace matte {

namespace {

// Loss with coordinate j of input i replaced; the other inputs keep their values.
using Probe = std::function<long double(std::size_t i, std::size_t j, long double value)>;

template <typename T>
Probe make_probe(const std::function<Var(Graph<T>&, const std::vector<Var>&)>& build,
                 const std::vector<Tensor<double>>& inputs) {
  auto copies = std::make_shared<std::vector<Tensor<T>>>();
  for (const auto& t : inputs) copies->push_back(t.template cast<T>());
  return [build, copies](std::size_t i, std::size_t j, long double value) -> long double {
    auto& probe = *copies;
    const T orig = probe[i][j];
    probe[i][j] = static_cast<T>(value);
    Graph<T> g;
    std::vector<Var> leaves;
    leaves.reserve(probe.size());
    for (const auto& t : probe) leaves.push_back(g.leaf(t, false));
    const long double out = g.value(build(g, leaves))[0];
    probe[i][j] = orig;
    return out;
  };
}

GradCheckResult run_check(const LossBuilder& build, const Probe& probe,
                          const std::vector<Tensor<double>>& inputs, const GradCheckOptions& opts) {
  if (!(opts.eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");

  Graph<double> g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.leaf(t, true));
  const Var loss = build(g, leaves);
  if (g.value(loss).size() != 1) {
    throw ShapeError("grad_check: loss must be scalar, got " + g.value(loss).shape().str());
  }
  g.backward(loss);

  GradCheckResult result;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double> analytic = g.grad(leaves[i]);
    std::vector<std::size_t> coords(inputs[i].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.samples_per_input != 0 && opts.samples_per_input < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.samples_per_input);
    }
    for (const std::size_t j : coords) {
      const long double orig = inputs[i][j];
      const long double up = probe(i, j, orig + opts.eps);
      const long double down = probe(i, j, orig - opts.eps);

      const double numeric = static_cast<double>((up - down) / (2.0L * opts.eps));
      const double a = analytic[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_relative_error || result.coordinates == 1) {
        result.max_relative_error = std::max(rel, result.max_relative_error);
        result.worst_input = i;
        result.worst_index = j;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& build, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& opts) {
  return run_check(build, make_probe<double>(build, inputs), inputs, opts);
}

GradCheckResult grad_check(const LossBuilder& build, const ExtendedLossBuilder& numeric,
                           const std::vector<Tensor<double>>& inputs, const GradCheckOptions& opts) {
  return run_check(build, make_probe<long double>(numeric, inputs), inputs, opts);
}

double grad_check(const std::function<Var(Graph<double>&, Var)>& build,
                  const Tensor<double>& input, double eps) {
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check([&](Graph<double>& g, const std::vector<Var>& v) { return build(g, v[0]); },
                    {input}, opts)
      .max_relative_error;
}

}  // namespace matte
