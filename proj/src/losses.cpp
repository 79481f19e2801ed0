#include "matte/losses.hpp"

#include <string>

namespace matte {

void LossConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("loss gamma must lie in [0, 1], got " + std::to_string(gamma));
  }
  if (!(eps >= 0.0)) throw std::invalid_argument("loss eps must be non-negative");
}

Image composite(const Image& alpha, const Image& fg, const Image& bg) {
  for (const double a : alpha.data()) {
    if (!(a >= 0.0 && a <= 1.0)) {
      throw std::invalid_argument("composite: alpha value " + std::to_string(a) + " outside [0, 1]");
    }
  }
  Graph<double> g;
  return g.value(composite(g, g.leaf(alpha, false), fg, bg));
}

double alpha_loss(const Image& pred, const Image& gt, double eps) {
  Graph<double> g;
  return g.value(charbonnier_mean(g, g.leaf(pred, false), gt, eps))[0];
}

double comp_loss(const Image& pred, const Image& fg, const Image& bg, const Image& observed,
                 double eps) {
  require_same_shape(fg.shape(), observed.shape(), "comp_loss");
  Graph<double> g;
  const Var c = composite(g, g.leaf(pred, false), fg, bg);
  return g.value(charbonnier_mean(g, c, observed, eps))[0];
}

double total_loss(double alpha_term, double comp_term, const LossConfig& cfg) {
  cfg.validate();
  return cfg.gamma * alpha_term + (1.0 - cfg.gamma) * comp_term;
}

template <typename T>
LossTerms<T> matting_loss(Graph<T>& g, Var pred, const Tensor<T>& gt_alpha, const Tensor<T>& fg,
                          const Tensor<T>& bg, const Tensor<T>& observed, const LossConfig& cfg) {
  cfg.validate();
  require_same_shape(fg.shape(), observed.shape(), "matting_loss");
  LossTerms<T> t;
  t.alpha = charbonnier_mean(g, pred, gt_alpha, static_cast<T>(cfg.eps));
  t.comp = charbonnier_mean(g, composite(g, pred, fg, bg), observed, static_cast<T>(cfg.eps));
  t.total = linear_combine(g, t.alpha, t.comp, static_cast<T>(cfg.gamma),
                           static_cast<T>(1.0 - cfg.gamma));
  return t;
}

template LossTerms<float> matting_loss(Graph<float>&, Var, const Tensor<float>&,
                                       const Tensor<float>&, const Tensor<float>&,
                                       const Tensor<float>&, const LossConfig&);
template LossTerms<double> matting_loss(Graph<double>&, Var, const Tensor<double>&,
                                        const Tensor<double>&, const Tensor<double>&,
                                        const Tensor<double>&, const LossConfig&);
template LossTerms<long double> matting_loss(Graph<long double>&, Var, const Tensor<long double>&,
                                             const Tensor<long double>&, const Tensor<long double>&,
                                             const Tensor<long double>&, const LossConfig&);

}  // namespace matte
