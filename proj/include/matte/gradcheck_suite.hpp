#pragma once

// Central-difference checks of every differentiable operator the matting
// network is built from, each over several random instances.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace matte {

struct GradCheckSuiteOptions {
  std::size_t seeds = 10;
  std::uint64_t base_seed = 0;
  double eps = 1e-6;
  /// Coordinates probed per parameter tensor of the full network.
  std::size_t net_samples_per_tensor = 4;
};

struct OperatorCheck {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t seeds = 0;
  std::size_t coordinates = 0;
};

/// Operators in a fixed order: conv2d, group_norm, relu, sigmoid,
/// window_softmax, attention_block, guided_pool, guided_unpool,
/// matting_forward, alpha_loss, comp_loss.
std::vector<OperatorCheck> run_gradcheck_suite(const GradCheckSuiteOptions& opts = {});

}  // namespace matte
