#include "matte/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace matte {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Gathers the receptive fields of channel group `g` into rows of `col`
// (one row per output pixel, columns ordered ky, kx, channel).
template <typename T>
void im2col(const Tensor<T>& x, const ConvGeometry& geo, std::size_t g, std::size_t ho,
            std::size_t wo, std::vector<T>& col) {
  const std::size_t cg = x.channels() / geo.groups;
  const std::size_t k = geo.kh * geo.kw * cg;
  col.assign(ho * wo * k, T(0));
  const auto h = static_cast<std::ptrdiff_t>(x.height());
  const auto w = static_cast<std::ptrdiff_t>(x.width());
  const auto pad = static_cast<std::ptrdiff_t>(geo.padding);
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      T* row = col.data() + (oy * wo + ox) * k;
      for (std::size_t ky = 0; ky < geo.kh; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * geo.stride + ky) - pad;
        if (iy < 0 || iy >= h) continue;
        for (std::size_t kx = 0; kx < geo.kw; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * geo.stride + kx) - pad;
          if (ix < 0 || ix >= w) continue;
          const T* src = &x(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), g * cg);
          std::copy(src, src + cg, row + (ky * geo.kw + kx) * cg);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const std::vector<T>& col, const ConvGeometry& geo, std::size_t g,
                std::size_t ho, std::size_t wo, Tensor<T>& dx) {
  const std::size_t cg = dx.channels() / geo.groups;
  const std::size_t k = geo.kh * geo.kw * cg;
  const auto h = static_cast<std::ptrdiff_t>(dx.height());
  const auto w = static_cast<std::ptrdiff_t>(dx.width());
  const auto pad = static_cast<std::ptrdiff_t>(geo.padding);
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      const T* row = col.data() + (oy * wo + ox) * k;
      for (std::size_t ky = 0; ky < geo.kh; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * geo.stride + ky) - pad;
        if (iy < 0 || iy >= h) continue;
        for (std::size_t kx = 0; kx < geo.kw; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * geo.stride + kx) - pad;
          if (ix < 0 || ix >= w) continue;
          T* dst = &dx(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), g * cg);
          const T* src = row + (ky * geo.kw + kx) * cg;
          for (std::size_t c = 0; c < cg; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace

Shape conv_weight_shape(std::size_t in, std::size_t out, const ConvGeometry& geo) {
  return Shape{out, geo.kh * geo.kw, geo.groups == 0 ? 0 : in / geo.groups};
}

void check_conv(const Shape& x, const Shape& weight, const Shape& bias, const ConvGeometry& geo) {
  require(geo.groups >= 1 && geo.stride >= 1 && geo.kh >= 1 && geo.kw >= 1,
          "conv2d: kernel, stride and groups must be positive");
  require(x.c % geo.groups == 0, "conv2d: input channels " + std::to_string(x.c) +
                                     " not divisible by groups " + std::to_string(geo.groups));
  require(weight.h % geo.groups == 0, "conv2d: output channels " + std::to_string(weight.h) +
                                          " not divisible by groups " +
                                          std::to_string(geo.groups));
  const Shape expected = conv_weight_shape(x.c, weight.h, geo);
  require(weight == expected, "conv2d: weight shape " + weight.str() + " does not match input " +
                                  x.str() + " (expected " + expected.str() + ")");
  require(bias == Shape{1, 1, weight.h},
          "conv2d: bias shape " + bias.str() + " does not match " + std::to_string(weight.h) +
              " output channels");
  require(x.h + 2 * geo.padding >= geo.kh && x.w + 2 * geo.padding >= geo.kw,
          "conv2d: padded input " + x.str() + " smaller than kernel");
}

template <typename T>
ConvSpec<T> ConvSpec<T>::zeros(std::size_t in, std::size_t out, ConvGeometry geo) {
  ConvSpec spec;
  spec.geo = geo;
  spec.in_channels = in;
  spec.out_channels = out;
  if (geo.groups == 0 || in % geo.groups != 0 || out % geo.groups != 0) {
    throw ShapeError("conv spec: channels " + std::to_string(in) + "->" + std::to_string(out) +
                     " not divisible by groups " + std::to_string(geo.groups));
  }
  spec.weight = Tensor<T>(conv_weight_shape(in, out, geo));
  spec.bias = Tensor<T>(1, 1, out);
  return spec;
}

template <typename T>
void ConvSpec<T>::validate() const {
  require(geo.groups >= 1 && in_channels % geo.groups == 0 && out_channels % geo.groups == 0,
          "conv spec: channels not divisible by groups");
  require(weight.shape() == conv_weight_shape(in_channels, out_channels, geo),
          "conv spec: weight length does not match out * in/groups * kh * kw");
  require(bias.shape() == Shape{1, 1, out_channels}, "conv spec: bias length mismatch");
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvGeometry& geo) {
  check_conv(x.shape(), weight.shape(), bias.shape(), geo);
  const std::size_t ho = geo.out_dim(x.height(), geo.kh);
  const std::size_t wo = geo.out_dim(x.width(), geo.kw);
  const std::size_t cout = weight.height();
  const std::size_t og = cout / geo.groups;
  const std::size_t k = weight.width() * weight.channels();
  const auto p = static_cast<Eigen::Index>(ho * wo);

  Tensor<T> y(ho, wo, cout);
  MatMap<T> ym(y.ptr(), p, static_cast<Eigen::Index>(cout));
  ConstMatMap<T> wm(weight.ptr(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k));
  std::vector<T> col;
  for (std::size_t g = 0; g < geo.groups; ++g) {
    im2col(x, geo, g, ho, wo, col);
    ConstMatMap<T> cm(col.data(), p, static_cast<Eigen::Index>(k));
    ym.middleCols(static_cast<Eigen::Index>(g * og), static_cast<Eigen::Index>(og)).noalias() =
        cm * wm.middleRows(static_cast<Eigen::Index>(g * og), static_cast<Eigen::Index>(og))
                 .transpose();
  }
  for (std::size_t i = 0; i < ho * wo; ++i) {
    T* row = y.ptr() + i * cout;
    for (std::size_t c = 0; c < cout; ++c) row[c] += bias[c];
  }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const ConvGeometry& geo,
                     const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const std::size_t ho = geo.out_dim(x.height(), geo.kh);
  const std::size_t wo = geo.out_dim(x.width(), geo.kw);
  const std::size_t cout = weight.height();
  const std::size_t og = cout / geo.groups;
  const std::size_t k = weight.width() * weight.channels();
  const auto p = static_cast<Eigen::Index>(ho * wo);
  require(dy.shape() == Shape{ho, wo, cout}, "conv2d backward: upstream gradient shape mismatch");

  ConstMatMap<T> dym(dy.ptr(), p, static_cast<Eigen::Index>(cout));
  ConstMatMap<T> wm(weight.ptr(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k));
  std::vector<T> col;
  for (std::size_t g = 0; g < geo.groups; ++g) {
    const auto rows = std::pair{static_cast<Eigen::Index>(g * og), static_cast<Eigen::Index>(og)};
    const auto dyg = dym.middleCols(rows.first, rows.second);
    if (dweight != nullptr) {
      im2col(x, geo, g, ho, wo, col);
      ConstMatMap<T> cm(col.data(), p, static_cast<Eigen::Index>(k));
      MatMap<T> dwm(dweight->ptr(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k));
      dwm.middleRows(rows.first, rows.second).noalias() += dyg.transpose() * cm;
    }
    if (dx != nullptr) {
      col.assign(ho * wo * k, T(0));
      MatMap<T> dcol(col.data(), p, static_cast<Eigen::Index>(k));
      dcol.noalias() = dyg * wm.middleRows(rows.first, rows.second);
      col2im_add(col, geo, g, ho, wo, *dx);
    }
  }
  if (dbias != nullptr) {
    for (std::size_t i = 0; i < ho * wo; ++i) {
      const T* row = dy.ptr() + i * cout;
      for (std::size_t c = 0; c < cout; ++c) (*dbias)[c] += row[c];
    }
  }
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, std::size_t groups, T eps, const Tensor<T>& gamma,
                     const Tensor<T>& beta, GroupNormCache<T>* cache) {
  const std::size_t c = x.channels();
  require(groups >= 1 && c % groups == 0, "group_norm: channels " + std::to_string(c) +
                                              " not divisible by groups " +
                                              std::to_string(groups));
  require(eps > T(0), "group_norm: eps must be positive");
  require(gamma.size() == c && beta.size() == c, "group_norm: affine length mismatch");
  const std::size_t cpg = c / groups;
  const std::size_t pixels = x.height() * x.width();
  const auto n = static_cast<T>(pixels * cpg);
  std::vector<T> mean(groups, T(0));
  std::vector<T> rstd(groups, T(0));
  for (std::size_t g = 0; g < groups; ++g) {
    T sum = 0;
    for (std::size_t i = 0; i < pixels; ++i) {
      for (std::size_t j = 0; j < cpg; ++j) sum += x[i * c + g * cpg + j];
    }
    const T mu = sum / n;
    T var = 0;
    for (std::size_t i = 0; i < pixels; ++i) {
      for (std::size_t j = 0; j < cpg; ++j) {
        const T d = x[i * c + g * cpg + j] - mu;
        var += d * d;
      }
    }
    mean[g] = mu;
    rstd[g] = T(1) / std::sqrt(var / n + eps);
  }
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < pixels; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t g = ch / cpg;
      y[i * c + ch] = (x[i * c + ch] - mean[g]) * rstd[g] * gamma[ch] + beta[ch];
    }
  }
  if (cache != nullptr) {
    cache->mean = std::move(mean);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename T>
void group_norm_backward(const Tensor<T>& x, std::size_t groups, const Tensor<T>& gamma,
                         const GroupNormCache<T>& cache, const Tensor<T>& dy, Tensor<T>* dx,
                         Tensor<T>* dgamma, Tensor<T>* dbeta) {
  const std::size_t c = x.channels();
  const std::size_t cpg = c / groups;
  const std::size_t pixels = x.height() * x.width();
  const auto n = static_cast<T>(pixels * cpg);
  for (std::size_t g = 0; g < groups; ++g) {
    const T mu = cache.mean[g];
    const T rs = cache.rstd[g];
    T sum_dxhat = 0;
    T sum_dxhat_xhat = 0;
    for (std::size_t i = 0; i < pixels; ++i) {
      for (std::size_t j = 0; j < cpg; ++j) {
        const std::size_t ch = g * cpg + j;
        const std::size_t idx = i * c + ch;
        const T xhat = (x[idx] - mu) * rs;
        const T dxhat = dy[idx] * gamma[ch];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        if (dgamma != nullptr) (*dgamma)[ch] += dy[idx] * xhat;
        if (dbeta != nullptr) (*dbeta)[ch] += dy[idx];
      }
    }
    if (dx == nullptr) continue;
    const T mean_dxhat = sum_dxhat / n;
    const T mean_dxhat_xhat = sum_dxhat_xhat / n;
    for (std::size_t i = 0; i < pixels; ++i) {
      for (std::size_t j = 0; j < cpg; ++j) {
        const std::size_t ch = g * cpg + j;
        const std::size_t idx = i * c + ch;
        const T xhat = (x[idx] - mu) * rs;
        const T dxhat = dy[idx] * gamma[ch];
        (*dx)[idx] += rs * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
      }
    }
  }
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  Tensor<T> y(x.shape());
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
  }
  return y;
}

template <typename T>
Tensor<T> window_softmax(const Tensor<T>& x, std::size_t window) {
  require(x.channels() == 1, "window_softmax: expected a single-channel map, got " +
                                 x.shape().str());
  require(window >= 1 && x.height() % window == 0 && x.width() % window == 0,
          "window_softmax: dims " + x.shape().str() + " not divisible by window " +
              std::to_string(window));
  Tensor<T> y(x.shape());
  for (std::size_t by = 0; by < x.height(); by += window) {
    for (std::size_t bx = 0; bx < x.width(); bx += window) {
      T mx = x(by, bx);
      for (std::size_t dy = 0; dy < window; ++dy) {
        for (std::size_t dx = 0; dx < window; ++dx) mx = std::max(mx, x(by + dy, bx + dx));
      }
      T sum = 0;
      for (std::size_t dy = 0; dy < window; ++dy) {
        for (std::size_t dx = 0; dx < window; ++dx) {
          const T e = std::exp(x(by + dy, bx + dx) - mx);
          y(by + dy, bx + dx) = e;
          sum += e;
        }
      }
      for (std::size_t dy = 0; dy < window; ++dy) {
        for (std::size_t dx = 0; dx < window; ++dx) y(by + dy, bx + dx) /= sum;
      }
    }
  }
  return y;
}

template <typename T>
void window_softmax_backward(const Tensor<T>& y, std::size_t window, const Tensor<T>& dy,
                             Tensor<T>& dx) {
  for (std::size_t by = 0; by < y.height(); by += window) {
    for (std::size_t bx = 0; bx < y.width(); bx += window) {
      T dot = 0;
      for (std::size_t a = 0; a < window; ++a) {
        for (std::size_t b = 0; b < window; ++b) dot += y(by + a, bx + b) * dy(by + a, bx + b);
      }
      for (std::size_t a = 0; a < window; ++a) {
        for (std::size_t b = 0; b < window; ++b) {
          dx(by + a, bx + b) += y(by + a, bx + b) * (dy(by + a, bx + b) - dot);
        }
      }
    }
  }
}

template <typename T>
Tensor<T> sum_pool(const Tensor<T>& x, std::size_t k, std::size_t s) {
  require(k >= 1 && s >= 1, "sum_pool: kernel and stride must be positive");
  require(x.height() >= k && x.width() >= k,
          "sum_pool: input " + x.shape().str() + " smaller than kernel");
  if (k == s) {
    require(x.height() % s == 0 && x.width() % s == 0,
            "sum_pool: dims " + x.shape().str() + " not divisible by stride " +
                std::to_string(s));
  }
  const std::size_t ho = (x.height() - k) / s + 1;
  const std::size_t wo = (x.width() - k) / s + 1;
  const std::size_t c = x.channels();
  Tensor<T> y(ho, wo, c);
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      T* dst = &y(oy, ox, 0);
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const T* src = &x(oy * s + ky, ox * s + kx, 0);
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
  return y;
}

template <typename T>
void sum_pool_backward(std::size_t k, std::size_t s, const Tensor<T>& dy, Tensor<T>& dx) {
  const std::size_t c = dx.channels();
  for (std::size_t oy = 0; oy < dy.height(); ++oy) {
    for (std::size_t ox = 0; ox < dy.width(); ++ox) {
      const T* src = &dy(oy, ox, 0);
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          T* dst = &dx(oy * s + ky, ox * s + kx, 0);
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, std::size_t factor) {
  require(factor >= 1, "nearest_upsample: factor must be >= 1");
  const std::size_t c = x.channels();
  Tensor<T> y(x.height() * factor, x.width() * factor, c);
  for (std::size_t oy = 0; oy < y.height(); ++oy) {
    for (std::size_t ox = 0; ox < y.width(); ++ox) {
      const T* src = &x(oy / factor, ox / factor, 0);
      std::copy(src, src + c, &y(oy, ox, 0));
    }
  }
  return y;
}

template <typename T>
void nearest_upsample_backward(std::size_t factor, const Tensor<T>& dy, Tensor<T>& dx) {
  const std::size_t c = dx.channels();
  for (std::size_t oy = 0; oy < dy.height(); ++oy) {
    for (std::size_t ox = 0; ox < dy.width(); ++ox) {
      const T* src = &dy(oy, ox, 0);
      T* dst = &dx(oy / factor, ox / factor, 0);
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
    }
  }
}

template <typename T>
Tensor<T> pixel_shuffle_compose(const std::array<const Tensor<T>*, 4>& maps) {
  const Shape s = maps[0]->shape();
  for (const auto* m : maps) {
    require(m->shape() == s, "pixel_shuffle_compose: shape mismatch " + m->shape().str() +
                                 " vs " + s.str());
  }
  Tensor<T> y(s.h * 2, s.w * 2, s.c);
  for (std::size_t m = 0; m < 4; ++m) {
    const std::size_t oy = m / 2;
    const std::size_t ox = m % 2;
    for (std::size_t i = 0; i < s.h; ++i) {
      for (std::size_t j = 0; j < s.w; ++j) {
        for (std::size_t ch = 0; ch < s.c; ++ch) y(2 * i + oy, 2 * j + ox, ch) = (*maps[m])(i, j, ch);
      }
    }
  }
  return y;
}

template <typename T>
std::array<Tensor<T>, 4> pixel_shuffle_decompose(const Tensor<T>& y) {
  require(y.height() % 2 == 0 && y.width() % 2 == 0,
          "pixel_shuffle_decompose: odd dims " + y.shape().str());
  std::array<Tensor<T>, 4> out;
  for (std::size_t m = 0; m < 4; ++m) {
    out[m] = Tensor<T>(y.height() / 2, y.width() / 2, y.channels());
    for (std::size_t i = 0; i < y.height() / 2; ++i) {
      for (std::size_t j = 0; j < y.width() / 2; ++j) {
        for (std::size_t ch = 0; ch < y.channels(); ++ch) {
          out[m](i, j, ch) = y(2 * i + m / 2, 2 * j + m % 2, ch);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> mul_broadcast(const Tensor<T>& x, const Tensor<T>& map) {
  require(map.channels() == 1 && map.height() == x.height() && map.width() == x.width(),
          "mul_broadcast: map " + map.shape().str() + " incompatible with " + x.shape().str());
  Tensor<T> y(x.shape());
  const std::size_t c = x.channels();
  for (std::size_t i = 0; i < map.size(); ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) y[i * c + ch] = x[i * c + ch] * map[i];
  }
  return y;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.height() == b.height() && a.width() == b.width(),
          "concat_channels: spatial mismatch " + a.shape().str() + " vs " + b.shape().str());
  const std::size_t ca = a.channels();
  const std::size_t cb = b.channels();
  Tensor<T> y(a.height(), a.width(), ca + cb);
  for (std::size_t i = 0; i < a.height() * a.width(); ++i) {
    std::copy(a.ptr() + i * ca, a.ptr() + (i + 1) * ca, y.ptr() + i * (ca + cb));
    std::copy(b.ptr() + i * cb, b.ptr() + (i + 1) * cb, y.ptr() + i * (ca + cb) + ca);
  }
  return y;
}

template <typename T>
Tensor<T> pad_to(const Tensor<T>& x, std::size_t h, std::size_t w) {
  require(h >= x.height() && w >= x.width(),
          "pad_to: target smaller than input " + x.shape().str());
  Tensor<T> y(h, w, x.channels());
  for (std::size_t i = 0; i < x.height(); ++i) {
    std::copy(&x(i, 0, 0), &x(i, 0, 0) + x.width() * x.channels(), &y(i, 0, 0));
  }
  return y;
}

template <typename T>
Tensor<T> crop_to(const Tensor<T>& x, std::size_t h, std::size_t w) {
  require(h <= x.height() && w <= x.width(), "crop_to: target larger than input " +
                                                 x.shape().str());
  Tensor<T> y(h, w, x.channels());
  for (std::size_t i = 0; i < h; ++i) {
    std::copy(&x(i, 0, 0), &x(i, 0, 0) + w * x.channels(), &y(i, 0, 0));
  }
  return y;
}

#define MATTE_INSTANTIATE_OPS(T)                                                               \
  template struct ConvSpec<T>;                                                                 \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                            const ConvGeometry&);                                              \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const ConvGeometry&,       \
                                const Tensor<T>&, Tensor<T>*, Tensor<T>*, Tensor<T>*);         \
  template Tensor<T> group_norm(const Tensor<T>&, std::size_t, T, const Tensor<T>&,            \
                                const Tensor<T>&, GroupNormCache<T>*);                         \
  template void group_norm_backward(const Tensor<T>&, std::size_t, const Tensor<T>&,           \
                                    const GroupNormCache<T>&, const Tensor<T>&, Tensor<T>*,    \
                                    Tensor<T>*, Tensor<T>*);                                   \
  template Tensor<T> activation(const Tensor<T>&, Activation);                                 \
  template Tensor<T> window_softmax(const Tensor<T>&, std::size_t);                            \
  template void window_softmax_backward(const Tensor<T>&, std::size_t, const Tensor<T>&,       \
                                        Tensor<T>&);                                           \
  template Tensor<T> sum_pool(const Tensor<T>&, std::size_t, std::size_t);                     \
  template void sum_pool_backward(std::size_t, std::size_t, const Tensor<T>&, Tensor<T>&);     \
  template Tensor<T> nearest_upsample(const Tensor<T>&, std::size_t);                          \
  template void nearest_upsample_backward(std::size_t, const Tensor<T>&, Tensor<T>&);          \
  template Tensor<T> pixel_shuffle_compose(const std::array<const Tensor<T>*, 4>&);            \
  template std::array<Tensor<T>, 4> pixel_shuffle_decompose(const Tensor<T>&);                 \
  template Tensor<T> mul_broadcast(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> pad_to(const Tensor<T>&, std::size_t, std::size_t);                       \
  template Tensor<T> crop_to(const Tensor<T>&, std::size_t, std::size_t);

MATTE_INSTANTIATE_OPS(float)
MATTE_INSTANTIATE_OPS(double)
MATTE_INSTANTIATE_OPS(long double)

}  // namespace matte
