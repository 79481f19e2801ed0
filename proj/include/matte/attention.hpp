#pragma once

// Attention-guided pooling and unpooling.
//
// One attention block maps an encoder feature map F (H x W x C) to a raw
// single-channel map of the same resolution. Four independent branches each
// run a 4x4 / stride 2 / pad 1 / 2-group convolution (C -> 2C), group norm,
// ReLU and two pointwise convolutions (2C -> bottleneck -> 1); their
// H/2 x W/2 outputs are interleaved back to H x W by a pixel shuffle.
//
// The raw map is normalised twice:
//   encoder: sigmoid, then softmax over every 2x2 pooling window, so guided
//            pooling is a convex combination of each window;
//   decoder: sigmoid only, applied after nearest upsampling.

#include <array>
#include <cstddef>
#include <random>

#include "matte/graph.hpp"
#include "matte/ops.hpp"

namespace matte {

template <typename T>
struct AttentionBranch {
  ConvSpec<T> group_conv;
  Tensor<T> norm_gamma;
  Tensor<T> norm_beta;
  ConvSpec<T> pointwise_reduce;
  ConvSpec<T> pointwise_out;
};

template <typename T>
struct AttentionBlockParams {
  std::size_t channels = 0;
  std::size_t bottleneck = 0;
  std::size_t norm_groups = 2;
  T norm_eps = T(1e-5);
  std::array<AttentionBranch<T>, 4> branches;

  /// All-zero weights and biases; group-norm gamma 1, beta 0.
  static AttentionBlockParams zeros(std::size_t channels, std::size_t bottleneck,
                                    std::size_t norm_groups = 2);
};

/// Zero-mean Gaussian weights with variance 2 / fan_in, zero biases.
template <typename T>
void he_init(ConvSpec<T>& spec, std::mt19937_64& rng);

template <typename T>
void he_init(AttentionBlockParams<T>& params, std::mt19937_64& rng);

// Graph forms.

template <typename T>
Var attention_block_forward(Graph<T>& g, ParamBinder<T>& bind, Var features,
                            const AttentionBlockParams<T>& params);
template <typename T>
Var normalize_encoder(Graph<T>& g, Var raw_map);
template <typename T>
Var normalize_decoder(Graph<T>& g, Var raw_map);
/// sum_pool(F * enc, 2, 2) for weights that sum to one over every 2x2 window,
/// as normalize_encoder produces. Evaluated as f0 + sum_{k>0} w_k (f_k - f0)
/// over each window, so constant features pass through exactly; the weight of
/// a window's first pixel gets no gradient, which the softmax makes harmless.
template <typename T>
Var guided_pool(Graph<T>& g, Var features, Var enc);
/// nearest_upsample(D, 2) * dec
template <typename T>
Var guided_unpool(Graph<T>& g, Var features, Var dec);

// Eager forms.

template <typename T>
Tensor<T> attention_block_forward(const Tensor<T>& features, const AttentionBlockParams<T>& params);
template <typename T>
Tensor<T> normalize_encoder(const Tensor<T>& raw_map);
template <typename T>
Tensor<T> normalize_decoder(const Tensor<T>& raw_map);
template <typename T>
Tensor<T> guided_pool(const Tensor<T>& features, const Tensor<T>& enc);
template <typename T>
Tensor<T> guided_unpool(const Tensor<T>& features, const Tensor<T>& dec);

}  // namespace matte
