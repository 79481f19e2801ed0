#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "matte/graph.hpp"

namespace matte {

/// Builds a scalar loss from the leaves created for each checked input.
using LossBuilder = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

struct GradCheckOptions {
  double eps = 1e-4;
  /// Coordinates probed per input; 0 probes all of them.
  std::size_t samples_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients with central differences. The relative
/// error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const LossBuilder& build, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& opts = {});

using ExtendedLossBuilder = std::function<Var(Graph<long double>&, const std::vector<Var>&)>;

/// Same check, but the central differences are taken in extended precision
/// through `numeric`, which must build the same loss as `build`. Needed when
/// gradients are so small that double roundoff swamps the difference quotient.
GradCheckResult grad_check(const LossBuilder& build, const ExtendedLossBuilder& numeric,
                           const std::vector<Tensor<double>>& inputs, const GradCheckOptions& opts = {});

/// Single-input convenience overload.
double grad_check(const std::function<Var(Graph<double>&, Var)>& build,
                  const Tensor<double>& input, double eps = 1e-4);

}  // namespace matte
