#pragma once

#include "matte/graph.hpp"
#include "matte/tensor.hpp"

namespace matte {

struct LossConfig {
  /// Weight of the alpha term; the compositional term gets 1 - gamma.
  double gamma = 0.5;
  /// Charbonnier smoothing of the absolute difference.
  double eps = 1e-6;

  void validate() const;
};

/// alpha * fg + (1 - alpha) * bg per pixel and channel. Alpha must lie in [0, 1].
Image composite(const Image& alpha, const Image& fg, const Image& bg);

/// Pixel mean of sqrt((pred - gt)^2 + eps^2) over the whole image.
double alpha_loss(const Image& pred, const Image& gt, double eps = 1e-6);

/// Same smoothed absolute difference between composite(pred, fg, bg) and the
/// observed image, averaged over pixels and channels.
double comp_loss(const Image& pred, const Image& fg, const Image& bg, const Image& observed,
                 double eps = 1e-6);

double total_loss(double alpha_term, double comp_term, const LossConfig& cfg = {});

template <typename T>
struct LossTerms {
  Var total;
  Var alpha;
  Var comp;
};

/// Differentiable gamma * alpha_loss + (1 - gamma) * comp_loss.
template <typename T>
LossTerms<T> matting_loss(Graph<T>& g, Var pred, const Tensor<T>& gt_alpha, const Tensor<T>& fg,
                          const Tensor<T>& bg, const Tensor<T>& observed, const LossConfig& cfg);

}  // namespace matte
