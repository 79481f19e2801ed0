#include "matte/graph.hpp"

#include <cmath>

namespace matte {

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias, const ConvGeometry& geo) {
  Tensor<T> y = conv2d(g.value(x), g.value(weight), g.value(bias), geo);
  return g.record(std::move(y), {x, weight, bias}, [x, weight, bias, geo](Graph<T>& gr, const Tensor<T>& dy) {
    conv2d_backward(gr.value(x), gr.value(weight), geo, dy, gr.accum(x), gr.accum(weight),
                    gr.accum(bias));
  });
}

template <typename T>
Var group_norm(Graph<T>& g, Var x, Var gamma, Var beta, std::size_t groups, T eps) {
  GroupNormCache<T> cache;
  Tensor<T> y = group_norm(g.value(x), groups, eps, g.value(gamma), g.value(beta), &cache);
  return g.record(std::move(y), {x, gamma, beta},
                  [x, gamma, beta, groups, cache = std::move(cache)](Graph<T>& gr, const Tensor<T>& dy) {
                    group_norm_backward(gr.value(x), groups, gr.value(gamma), cache, dy,
                                        gr.accum(x), gr.accum(gamma), gr.accum(beta));
                  });
}

template <typename T>
Var relu(Graph<T>& g, Var x) {
  Tensor<T> y = activation(g.value(x), Activation::relu);
  return g.record(std::move(y), {x}, [x](Graph<T>& gr, const Tensor<T>& dy) {
    const Tensor<T>& in = gr.value(x);
    Tensor<T>* dx = gr.accum(x);
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] > T(0)) (*dx)[i] += dy[i];
    }
  });
}

template <typename T>
Var sigmoid(Graph<T>& g, Var x) {
  Tensor<T> y = activation(g.value(x), Activation::sigmoid);
  const Var out{g.size()};
  return g.record(std::move(y), {x}, [x, out](Graph<T>& gr, const Tensor<T>& dy) {
    const Tensor<T>& s = gr.value(out);
    Tensor<T>* dx = gr.accum(x);
    for (std::size_t i = 0; i < s.size(); ++i) (*dx)[i] += dy[i] * s[i] * (T(1) - s[i]);
  });
}

template <typename T>
Var window_softmax(Graph<T>& g, Var x, std::size_t window) {
  Tensor<T> y = window_softmax(g.value(x), window);
  const Var out{g.size()};
  return g.record(std::move(y), {x}, [x, out, window](Graph<T>& gr, const Tensor<T>& dy) {
    window_softmax_backward(gr.value(out), window, dy, *gr.accum(x));
  });
}

template <typename T>
Var sum_pool(Graph<T>& g, Var x, std::size_t k, std::size_t s) {
  Tensor<T> y = sum_pool(g.value(x), k, s);
  return g.record(std::move(y), {x}, [x, k, s](Graph<T>& gr, const Tensor<T>& dy) {
    sum_pool_backward(k, s, dy, *gr.accum(x));
  });
}

template <typename T>
Var scale(Graph<T>& g, Var x, T factor) {
  Tensor<T> y = g.value(x);
  for (auto& v : y.vec()) v *= factor;
  return g.record(std::move(y), {x}, [x, factor](Graph<T>& gr, const Tensor<T>& dy) {
    Tensor<T>* dx = gr.accum(x);
    for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i] * factor;
  });
}

template <typename T>
Var affine(Graph<T>& g, Var x, T factor, T offset) {
  Tensor<T> y = g.value(x);
  for (auto& v : y.vec()) v = v * factor + offset;
  return g.record(std::move(y), {x}, [x, factor](Graph<T>& gr, const Tensor<T>& dy) {
    Tensor<T>* dx = gr.accum(x);
    for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i] * factor;
  });
}

template <typename T>
Var nearest_upsample(Graph<T>& g, Var x, std::size_t factor) {
  Tensor<T> y = nearest_upsample(g.value(x), factor);
  return g.record(std::move(y), {x}, [x, factor](Graph<T>& gr, const Tensor<T>& dy) {
    nearest_upsample_backward(factor, dy, *gr.accum(x));
  });
}

template <typename T>
Var pixel_shuffle_compose(Graph<T>& g, const std::array<Var, 4>& maps) {
  Tensor<T> y = pixel_shuffle_compose<T>(
      {&g.value(maps[0]), &g.value(maps[1]), &g.value(maps[2]), &g.value(maps[3])});
  return g.record(std::move(y), {maps[0], maps[1], maps[2], maps[3]},
                  [maps](Graph<T>& gr, const Tensor<T>& dy) {
                    auto parts = pixel_shuffle_decompose(dy);
                    for (std::size_t m = 0; m < 4; ++m) {
                      if (Tensor<T>* dx = gr.accum(maps[m])) {
                        for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += parts[m][i];
                      }
                    }
                  });
}

template <typename T>
Var mul_broadcast(Graph<T>& g, Var x, Var map) {
  Tensor<T> y = mul_broadcast(g.value(x), g.value(map));
  return g.record(std::move(y), {x, map}, [x, map](Graph<T>& gr, const Tensor<T>& dy) {
    const Tensor<T>& xv = gr.value(x);
    const Tensor<T>& mv = gr.value(map);
    const std::size_t c = xv.channels();
    if (Tensor<T>* dx = gr.accum(x)) {
      for (std::size_t i = 0; i < mv.size(); ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) (*dx)[i * c + ch] += dy[i * c + ch] * mv[i];
      }
    }
    if (Tensor<T>* dm = gr.accum(map)) {
      for (std::size_t i = 0; i < mv.size(); ++i) {
        T acc = 0;
        for (std::size_t ch = 0; ch < c; ++ch) acc += dy[i * c + ch] * xv[i * c + ch];
        (*dm)[i] += acc;
      }
    }
  });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  require_same_shape(g.value(a).shape(), g.value(b).shape(), "mul");
  Tensor<T> y = g.value(a);
  const Tensor<T>& bv = g.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return g.record(std::move(y), {a, b}, [a, b](Graph<T>& gr, const Tensor<T>& dy) {
    const Tensor<T>& av = gr.value(a);
    const Tensor<T>& bv2 = gr.value(b);
    if (Tensor<T>* da = gr.accum(a)) {
      for (std::size_t i = 0; i < dy.size(); ++i) (*da)[i] += dy[i] * bv2[i];
    }
    if (Tensor<T>* db = gr.accum(b)) {
      for (std::size_t i = 0; i < dy.size(); ++i) (*db)[i] += dy[i] * av[i];
    }
  });
}

template <typename T>
Var concat_channels(Graph<T>& g, Var a, Var b) {
  Tensor<T> y = concat_channels(g.value(a), g.value(b));
  const std::size_t ca = g.value(a).channels();
  const std::size_t cb = g.value(b).channels();
  return g.record(std::move(y), {a, b}, [a, b, ca, cb](Graph<T>& gr, const Tensor<T>& dy) {
    const std::size_t pixels = dy.height() * dy.width();
    if (Tensor<T>* da = gr.accum(a)) {
      for (std::size_t i = 0; i < pixels; ++i) {
        for (std::size_t c = 0; c < ca; ++c) (*da)[i * ca + c] += dy[i * (ca + cb) + c];
      }
    }
    if (Tensor<T>* db = gr.accum(b)) {
      for (std::size_t i = 0; i < pixels; ++i) {
        for (std::size_t c = 0; c < cb; ++c) (*db)[i * cb + c] += dy[i * (ca + cb) + ca + c];
      }
    }
  });
}

template <typename T>
Var pad_to(Graph<T>& g, Var x, std::size_t h, std::size_t w) {
  const Shape in = g.value(x).shape();
  if (in.h == h && in.w == w) return x;
  Tensor<T> y = pad_to(g.value(x), h, w);
  return g.record(std::move(y), {x}, [x, in](Graph<T>& gr, const Tensor<T>& dy) {
    const Tensor<T> part = crop_to(dy, in.h, in.w);
    Tensor<T>* dx = gr.accum(x);
    for (std::size_t i = 0; i < part.size(); ++i) (*dx)[i] += part[i];
  });
}

template <typename T>
Var crop_to(Graph<T>& g, Var x, std::size_t h, std::size_t w) {
  const Shape in = g.value(x).shape();
  if (in.h == h && in.w == w) return x;
  Tensor<T> y = crop_to(g.value(x), h, w);
  return g.record(std::move(y), {x}, [x, in](Graph<T>& gr, const Tensor<T>& dy) {
    const Tensor<T> full = pad_to(dy, in.h, in.w);
    Tensor<T>* dx = gr.accum(x);
    for (std::size_t i = 0; i < full.size(); ++i) (*dx)[i] += full[i];
  });
}

template <typename T>
Var sum(Graph<T>& g, Var x) {
  T acc = 0;
  for (const T v : g.value(x).data()) acc += v;
  return g.record(Tensor<T>(1, 1, 1, acc), {x}, [x](Graph<T>& gr, const Tensor<T>& dy) {
    Tensor<T>* dx = gr.accum(x);
    for (auto& v : dx->vec()) v += dy[0];
  });
}

template <typename T>
Var weighted_sum(Graph<T>& g, Var x, const Tensor<T>& weights) {
  require_same_shape(g.value(x).shape(), weights.shape(), "weighted_sum");
  T acc = 0;
  const Tensor<T>& xv = g.value(x);
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * weights[i];
  return g.record(Tensor<T>(1, 1, 1, acc), {x}, [x, weights](Graph<T>& gr, const Tensor<T>& dy) {
    Tensor<T>* dx = gr.accum(x);
    for (std::size_t i = 0; i < weights.size(); ++i) (*dx)[i] += dy[0] * weights[i];
  });
}

template <typename T>
Var charbonnier_mean(Graph<T>& g, Var x, const Tensor<T>& target, T eps) {
  require_same_shape(g.value(x).shape(), target.shape(), "charbonnier_mean");
  const Tensor<T>& xv = g.value(x);
  const auto n = static_cast<T>(xv.size());
  T acc = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T d = xv[i] - target[i];
    acc += std::sqrt(d * d + eps * eps);
  }
  return g.record(Tensor<T>(1, 1, 1, acc / n), {x},
                  [x, target, eps, n](Graph<T>& gr, const Tensor<T>& dy) {
                    const Tensor<T>& v = gr.value(x);
                    Tensor<T>* dx = gr.accum(x);
                    for (std::size_t i = 0; i < v.size(); ++i) {
                      const T d = v[i] - target[i];
                      (*dx)[i] += dy[0] * d / (std::sqrt(d * d + eps * eps) * n);
                    }
                  });
}

template <typename T>
Var composite(Graph<T>& g, Var alpha, const Tensor<T>& fg, const Tensor<T>& bg) {
  require_same_shape(fg.shape(), bg.shape(), "composite");
  const Tensor<T>& a = g.value(alpha);
  if (a.channels() != 1 || a.height() != fg.height() || a.width() != fg.width()) {
    throw ShapeError("composite: alpha " + a.shape().str() + " incompatible with " +
                     fg.shape().str());
  }
  const std::size_t c = fg.channels();
  Tensor<T> y(fg.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t k = i * c + ch;
      y[k] = a[i] * fg[k] + (T(1) - a[i]) * bg[k];
    }
  }
  return g.record(std::move(y), {alpha}, [alpha, fg, bg, c](Graph<T>& gr, const Tensor<T>& dy) {
    Tensor<T>* da = gr.accum(alpha);
    for (std::size_t i = 0; i < da->size(); ++i) {
      T acc = 0;
      for (std::size_t ch = 0; ch < c; ++ch) acc += dy[i * c + ch] * (fg[i * c + ch] - bg[i * c + ch]);
      (*da)[i] += acc;
    }
  });
}

template <typename T>
Var fuse_with_trimap(Graph<T>& g, Var raw_alpha, const Tensor<T>& trimap) {
  require_same_shape(g.value(raw_alpha).shape(), trimap.shape(), "fuse_with_trimap");
  Tensor<T> y = g.value(raw_alpha);
  std::vector<unsigned char> pass(y.size(), 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    switch (trimap_level(static_cast<double>(trimap[i]))) {
      case TrimapLevel::background: y[i] = T(0); break;
      case TrimapLevel::foreground: y[i] = T(1); break;
      case TrimapLevel::unknown: pass[i] = 1; break;
    }
  }
  return g.record(std::move(y), {raw_alpha},
                  [raw_alpha, pass = std::move(pass)](Graph<T>& gr, const Tensor<T>& dy) {
                    Tensor<T>* dx = gr.accum(raw_alpha);
                    for (std::size_t i = 0; i < pass.size(); ++i) {
                      if (pass[i] != 0) (*dx)[i] += dy[i];
                    }
                  });
}

template <typename T>
Var linear_combine(Graph<T>& g, Var a, Var b, T ca, T cb) {
  if (g.value(a).size() != 1 || g.value(b).size() != 1) {
    throw ShapeError("linear_combine: operands must be scalar");
  }
  const T v = ca * g.value(a)[0] + cb * g.value(b)[0];
  return g.record(Tensor<T>(1, 1, 1, v), {a, b}, [a, b, ca, cb](Graph<T>& gr, const Tensor<T>& dy) {
    if (Tensor<T>* da = gr.accum(a)) (*da)[0] += ca * dy[0];
    if (Tensor<T>* db = gr.accum(b)) (*db)[0] += cb * dy[0];
  });
}

#define MATTE_INSTANTIATE_GRAPH(T)                                                          \
  template Var conv2d(Graph<T>&, Var, Var, Var, const ConvGeometry&);                       \
  template Var group_norm(Graph<T>&, Var, Var, Var, std::size_t, T);                        \
  template Var relu(Graph<T>&, Var);                                                        \
  template Var sigmoid(Graph<T>&, Var);                                                     \
  template Var window_softmax(Graph<T>&, Var, std::size_t);                                 \
  template Var sum_pool(Graph<T>&, Var, std::size_t, std::size_t);                          \
  template Var scale(Graph<T>&, Var, T);                                                    \
  template Var affine(Graph<T>&, Var, T, T);                                                \
  template Var nearest_upsample(Graph<T>&, Var, std::size_t);                               \
  template Var pixel_shuffle_compose(Graph<T>&, const std::array<Var, 4>&);                 \
  template Var mul_broadcast(Graph<T>&, Var, Var);                                          \
  template Var mul(Graph<T>&, Var, Var);                                                    \
  template Var concat_channels(Graph<T>&, Var, Var);                                        \
  template Var pad_to(Graph<T>&, Var, std::size_t, std::size_t);                            \
  template Var crop_to(Graph<T>&, Var, std::size_t, std::size_t);                           \
  template Var sum(Graph<T>&, Var);                                                         \
  template Var weighted_sum(Graph<T>&, Var, const Tensor<T>&);                              \
  template Var charbonnier_mean(Graph<T>&, Var, const Tensor<T>&, T);                       \
  template Var composite(Graph<T>&, Var, const Tensor<T>&, const Tensor<T>&);               \
  template Var fuse_with_trimap(Graph<T>&, Var, const Tensor<T>&);                          \
  template Var linear_combine(Graph<T>&, Var, Var, T, T);

MATTE_INSTANTIATE_GRAPH(float)
MATTE_INSTANTIATE_GRAPH(double)
MATTE_INSTANTIATE_GRAPH(long double)

}  // namespace matte
