#pragma once

// Forward and backward kernels for the operator set used by the matting
// network. Every kernel is a pure function of its arguments; backward kernels
// accumulate (+=) into caller-provided gradient buffers.

#include <array>
#include <cstddef>

#include "matte/tensor.hpp"

namespace matte {

struct ConvGeometry {
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;

  std::size_t out_dim(std::size_t in, std::size_t k) const {
    return (in + 2 * padding - k) / stride + 1;
  }
};

/// Convolution parameters. `weight` has shape (out, kh*kw, in/groups), `bias` (1, 1, out).
template <typename T>
struct ConvSpec {
  ConvGeometry geo;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Tensor<T> weight;
  Tensor<T> bias;

  static ConvSpec zeros(std::size_t in, std::size_t out, ConvGeometry geo);
  void validate() const;
  std::size_t fan_in() const { return geo.kh * geo.kw * (in_channels / geo.groups); }
};

Shape conv_weight_shape(std::size_t in, std::size_t out, const ConvGeometry& geo);
void check_conv(const Shape& x, const Shape& weight, const Shape& bias, const ConvGeometry& geo);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvGeometry& geo);
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvSpec<T>& spec) {
  spec.validate();
  return conv2d(x, spec.weight, spec.bias, spec.geo);
}
/// Any of dx, dweight, dbias may be null.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const ConvGeometry& geo,
                     const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias);

template <typename T>
struct GroupNormCache {
  std::vector<T> mean;
  std::vector<T> rstd;
};

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, std::size_t groups, T eps, const Tensor<T>& gamma,
                     const Tensor<T>& beta, GroupNormCache<T>* cache = nullptr);
template <typename T>
void group_norm_backward(const Tensor<T>& x, std::size_t groups, const Tensor<T>& gamma,
                         const GroupNormCache<T>& cache, const Tensor<T>& dy, Tensor<T>* dx,
                         Tensor<T>* dgamma, Tensor<T>* dbeta);

enum class Activation { relu, sigmoid };

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);

/// Softmax over each non-overlapping window x window block of a single-channel map.
template <typename T>
Tensor<T> window_softmax(const Tensor<T>& x, std::size_t window);
template <typename T>
void window_softmax_backward(const Tensor<T>& y, std::size_t window, const Tensor<T>& dy,
                             Tensor<T>& dx);

template <typename T>
Tensor<T> sum_pool(const Tensor<T>& x, std::size_t k, std::size_t s);
template <typename T>
void sum_pool_backward(std::size_t k, std::size_t s, const Tensor<T>& dy, Tensor<T>& dx);

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, std::size_t factor);
template <typename T>
void nearest_upsample_backward(std::size_t factor, const Tensor<T>& dy, Tensor<T>& dx);

/// Map m lands on sub-lattice offset (m / 2, m % 2) of every 2x2 output block.
template <typename T>
Tensor<T> pixel_shuffle_compose(const std::array<const Tensor<T>*, 4>& maps);
template <typename T>
std::array<Tensor<T>, 4> pixel_shuffle_decompose(const Tensor<T>& y);

/// x (H x W x C) times a single-channel map (H x W x 1) broadcast over channels.
template <typename T>
Tensor<T> mul_broadcast(const Tensor<T>& x, const Tensor<T>& map);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Zero-pads at the bottom/right up to (h, w).
template <typename T>
Tensor<T> pad_to(const Tensor<T>& x, std::size_t h, std::size_t w);
/// Keeps the top-left (h, w) region.
template <typename T>
Tensor<T> crop_to(const Tensor<T>& x, std::size_t h, std::size_t w);

enum class TrimapLevel { background, unknown, foreground };

/// Classifies a stored trimap value, tolerating 8-bit quantisation around 0.5.
inline TrimapLevel trimap_level(double v) {
  if (v <= 0.25) return TrimapLevel::background;
  if (v >= 0.75) return TrimapLevel::foreground;
  return TrimapLevel::unknown;
}

}  // namespace matte
