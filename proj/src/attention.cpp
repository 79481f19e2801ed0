#include "matte/attention.hpp"

#include <cmath>
#include <string>

namespace matte {

namespace {

constexpr ConvGeometry kBranchConv{4, 4, 2, 1, 2};
constexpr ConvGeometry kPointwise{1, 1, 1, 0, 1};

template <typename T>
Var apply_conv(Graph<T>& g, ParamBinder<T>& bind, Var x, const ConvSpec<T>& spec) {
  return conv2d(g, x, bind(spec.weight), bind(spec.bias), spec.geo);
}

}  // namespace

template <typename T>
AttentionBlockParams<T> AttentionBlockParams<T>::zeros(std::size_t channels,
                                                       std::size_t bottleneck,
                                                       std::size_t norm_groups) {
  if (channels == 0 || channels % 2 != 0) {
    throw ShapeError("attention block: channel count " + std::to_string(channels) +
                     " must be positive and even");
  }
  if (bottleneck == 0) throw ShapeError("attention block: bottleneck width must be positive");
  if ((2 * channels) % norm_groups != 0) {
    throw ShapeError("attention block: norm groups must divide " + std::to_string(2 * channels));
  }
  AttentionBlockParams p;
  p.channels = channels;
  p.bottleneck = bottleneck;
  p.norm_groups = norm_groups;
  for (auto& b : p.branches) {
    b.group_conv = ConvSpec<T>::zeros(channels, 2 * channels, kBranchConv);
    b.norm_gamma = Tensor<T>(1, 1, 2 * channels, T(1));
    b.norm_beta = Tensor<T>(1, 1, 2 * channels, T(0));
    b.pointwise_reduce = ConvSpec<T>::zeros(2 * channels, bottleneck, kPointwise);
    b.pointwise_out = ConvSpec<T>::zeros(bottleneck, 1, kPointwise);
  }
  return p;
}

template <typename T>
void he_init(ConvSpec<T>& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(spec.fan_in())));
  for (auto& w : spec.weight.vec()) w = static_cast<T>(normal(rng));
  spec.bias.fill(T(0));
}

template <typename T>
void he_init(AttentionBlockParams<T>& params, std::mt19937_64& rng) {
  for (auto& b : params.branches) {
    he_init(b.group_conv, rng);
    he_init(b.pointwise_reduce, rng);
    he_init(b.pointwise_out, rng);
    b.norm_gamma.fill(T(1));
    b.norm_beta.fill(T(0));
  }
}

template <typename T>
Var attention_block_forward(Graph<T>& g, ParamBinder<T>& bind, Var features,
                            const AttentionBlockParams<T>& params) {
  const Shape s = g.value(features).shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("attention block: spatial dims " + s.str() + " must be even (pad first)");
  }
  if (s.c != params.channels) {
    throw ShapeError("attention block: expected " + std::to_string(params.channels) +
                     " channels, got " + s.str());
  }
  std::array<Var, 4> maps;
  for (std::size_t m = 0; m < 4; ++m) {
    const auto& b = params.branches[m];
    Var x = apply_conv(g, bind, features, b.group_conv);
    x = group_norm(g, x, bind(b.norm_gamma), bind(b.norm_beta), params.norm_groups, params.norm_eps);
    x = relu(g, x);
    x = relu(g, apply_conv(g, bind, x, b.pointwise_reduce));
    maps[m] = apply_conv(g, bind, x, b.pointwise_out);
  }
  return pixel_shuffle_compose(g, maps);
}

template <typename T>
Var normalize_encoder(Graph<T>& g, Var raw_map) {
  return window_softmax(g, sigmoid(g, raw_map), 2);
}

template <typename T>
Var normalize_decoder(Graph<T>& g, Var raw_map) {
  return sigmoid(g, raw_map);
}

template <typename T>
Var guided_pool(Graph<T>& g, Var features, Var enc) {
  const Shape f = g.value(features).shape();
  const Shape a = g.value(enc).shape();
  if (a.c != 1 || a.h != f.h || a.w != f.w) {
    throw ShapeError("guided_pool: attention " + a.str() + " incompatible with features " + f.str());
  }
  if (f.h % 2 != 0 || f.w % 2 != 0) throw ShapeError("guided_pool: odd spatial size " + f.str());

  // Each window is reduced as f0 + sum_{k>0} w_k (f_k - f0), where k runs over
  // the window in raster order. With window weights summing to one this is the
  // sum-pooled product, and a constant window comes back bit-exact.
  const Tensor<T>& fv = g.value(features);
  const Tensor<T>& wv = g.value(enc);
  const std::size_t oh = f.h / 2, ow = f.w / 2, c = f.c, fw = f.w;
  auto at = [fw](std::size_t y, std::size_t x, std::size_t k) { return (2 * y + k / 2) * fw + 2 * x + k % 2; };
  Tensor<T> out(oh, ow, c);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      const std::size_t p0 = at(y, x, 0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T f0 = fv[p0 * c + ch];
        T acc = 0;
        for (std::size_t k = 1; k < 4; ++k) {
          const std::size_t pk = at(y, x, k);
          acc += wv[pk] * (fv[pk * c + ch] - f0);
        }
        out(y, x, ch) = f0 + acc;
      }
    }
  return g.record(std::move(out), {features, enc}, [features, enc, at, oh, ow, c](Graph<T>& gr, const Tensor<T>& dy) {
    const Tensor<T>& fv = gr.value(features);
    const Tensor<T>& wv = gr.value(enc);
    Tensor<T>* df = gr.accum(features);
    Tensor<T>* dw = gr.accum(enc);
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t p0 = at(y, x, 0);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T d = dy[(y * ow + x) * c + ch];
          const T f0 = fv[p0 * c + ch];
          T rest = 0;
          for (std::size_t k = 1; k < 4; ++k) {
            const std::size_t pk = at(y, x, k);
            rest += wv[pk];
            if (df) (*df)[pk * c + ch] += d * wv[pk];
            if (dw) (*dw)[pk] += d * (fv[pk * c + ch] - f0);
          }
          if (df) (*df)[p0 * c + ch] += d * (T(1) - rest);
        }
      }
  });
}

template <typename T>
Var guided_unpool(Graph<T>& g, Var features, Var dec) {
  const Shape f = g.value(features).shape();
  const Shape a = g.value(dec).shape();
  if (a.c != 1 || a.h != 2 * f.h || a.w != 2 * f.w) {
    throw ShapeError("guided_unpool: attention " + a.str() + " is not twice the size of " + f.str());
  }
  return mul_broadcast(g, nearest_upsample(g, features, 2), dec);
}

template <typename T>
Tensor<T> attention_block_forward(const Tensor<T>& features, const AttentionBlockParams<T>& params) {
  Graph<T> g;
  ParamBinder<T> bind(g, false);
  return g.value(attention_block_forward(g, bind, g.leaf(features, false), params));
}

template <typename T>
Tensor<T> normalize_encoder(const Tensor<T>& raw_map) {
  return window_softmax(activation(raw_map, Activation::sigmoid), 2);
}

template <typename T>
Tensor<T> normalize_decoder(const Tensor<T>& raw_map) {
  return activation(raw_map, Activation::sigmoid);
}

template <typename T>
Tensor<T> guided_pool(const Tensor<T>& features, const Tensor<T>& enc) {
  Graph<T> g;
  return g.value(guided_pool(g, g.leaf(features, false), g.leaf(enc, false)));
}

template <typename T>
Tensor<T> guided_unpool(const Tensor<T>& features, const Tensor<T>& dec) {
  Graph<T> g;
  return g.value(guided_unpool(g, g.leaf(features, false), g.leaf(dec, false)));
}

#define MATTE_INSTANTIATE_ATTENTION(T)                                                        \
  template struct AttentionBlockParams<T>;                                                    \
  template void he_init(ConvSpec<T>&, std::mt19937_64&);                                      \
  template void he_init(AttentionBlockParams<T>&, std::mt19937_64&);                          \
  template Var attention_block_forward(Graph<T>&, ParamBinder<T>&, Var,                       \
                                       const AttentionBlockParams<T>&);                       \
  template Var normalize_encoder(Graph<T>&, Var);                                             \
  template Var normalize_decoder(Graph<T>&, Var);                                             \
  template Var guided_pool(Graph<T>&, Var, Var);                                              \
  template Var guided_unpool(Graph<T>&, Var, Var);                                            \
  template Tensor<T> attention_block_forward(const Tensor<T>&, const AttentionBlockParams<T>&); \
  template Tensor<T> normalize_encoder(const Tensor<T>&);                                     \
  template Tensor<T> normalize_decoder(const Tensor<T>&);                                     \
  template Tensor<T> guided_pool(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> guided_unpool(const Tensor<T>&, const Tensor<T>&);

MATTE_INSTANTIATE_ATTENTION(float)
MATTE_INSTANTIATE_ATTENTION(double)
MATTE_INSTANTIATE_ATTENTION(long double)

}  // namespace matte
