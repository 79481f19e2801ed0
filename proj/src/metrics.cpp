#include "matte/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "matte/image_io.hpp"

namespace matte {

namespace {

void check_pair(const Image& pred, const Image& gt) {
  require_same_shape(pred.shape(), gt.shape(), "evaluate");
  if (pred.channels() != 1) throw ShapeError("evaluate: mattes must be single-channel");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!(pred[i] >= 0.0 && pred[i] <= 1.0) || !(gt[i] >= 0.0 && gt[i] <= 1.0)) {
      throw std::invalid_argument("evaluate: matte values must be normalised to [0, 1]");
    }
  }
}

double gauss(double x, double sigma) {
  return std::exp(-x * x / (2.0 * sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

// 1-D convolution along rows (axis 1) or columns (axis 0) with replicated borders.
Image convolve_axis(const Image& in, const std::vector<double>& kernel, int axis) {
  const auto half = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const auto h = static_cast<std::ptrdiff_t>(in.height());
  const auto w = static_cast<std::ptrdiff_t>(in.width());
  Image out(in.shape());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -half; k <= half; ++k) {
        const double kv = kernel[static_cast<std::size_t>(k + half)];
        std::ptrdiff_t sy = y;
        std::ptrdiff_t sx = x;
        if (axis == 0) {
          sy = std::clamp<std::ptrdiff_t>(y - k, 0, h - 1);
        } else {
          sx = std::clamp<std::ptrdiff_t>(x - k, 0, w - 1);
        }
        acc += kv * in(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
      out(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
    }
  }
  return out;
}

}  // namespace

Image gaussian_gradient_magnitude(const Image& image, double sigma) {
  if (image.channels() != 1) throw ShapeError("gradient: expected single-channel image");
  constexpr double kEpsilon = 1e-2;
  const auto half = static_cast<std::ptrdiff_t>(
      std::ceil(sigma * std::sqrt(-2.0 * std::log(std::sqrt(2.0 * std::numbers::pi) * sigma * kEpsilon))));
  std::vector<double> smooth;
  std::vector<double> deriv;
  for (std::ptrdiff_t u = -half; u <= half; ++u) {
    const double x = static_cast<double>(u);
    smooth.push_back(gauss(x, sigma));
    deriv.push_back(-x * gauss(x, sigma) / (sigma * sigma));
  }
  // Normalise the outer-product kernel to unit Frobenius norm.
  const double norm = std::sqrt(std::inner_product(smooth.begin(), smooth.end(), smooth.begin(), 0.0) *
                                std::inner_product(deriv.begin(), deriv.end(), deriv.begin(), 0.0));
  for (auto& v : deriv) v /= norm;

  const Image gx = convolve_axis(convolve_axis(image, deriv, 1), smooth, 0);
  const Image gy = convolve_axis(convolve_axis(image, smooth, 1), deriv, 0);
  Image mag(image.shape());
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
  return mag;
}

double gradient_error(const Image& pred, const Image& gt, double sigma) {
  const Image pm = gaussian_gradient_magnitude(pred, sigma);
  const Image gm = gaussian_gradient_magnitude(gt, sigma);
  double acc = 0.0;
  for (std::size_t i = 0; i < pm.size(); ++i) acc += (pm[i] - gm[i]) * (pm[i] - gm[i]);
  return pm.empty() ? 0.0 : acc / static_cast<double>(pm.size());
}

std::vector<int> label_components(const std::vector<std::uint8_t>& binary, std::size_t h,
                                  std::size_t w) {
  std::vector<std::size_t> parent(binary.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  auto unite = [&](std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      if (binary[i] == 0) continue;
      if (x > 0 && binary[i - 1] != 0) unite(i, i - 1);
      if (y > 0 && binary[i - w] != 0) unite(i, i - w);
    }
  }
  // Roots are the smallest index of each component, so raster order of roots
  // is raster order of first pixels.
  std::vector<int> labels(binary.size(), -1);
  std::vector<int> root_label(binary.size(), -1);
  int next = 0;
  for (std::size_t i = 0; i < binary.size(); ++i) {
    if (binary[i] == 0) continue;
    const std::size_t r = find(i);
    if (root_label[r] < 0) root_label[r] = next++;
    labels[i] = root_label[r];
  }
  return labels;
}

std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& binary,
                                            std::size_t h, std::size_t w) {
  const std::vector<int> labels = label_components(binary, h, w);
  std::vector<std::size_t> sizes;
  for (const int l : labels) {
    if (l < 0) continue;
    if (static_cast<std::size_t>(l) >= sizes.size()) sizes.resize(static_cast<std::size_t>(l) + 1, 0);
    ++sizes[static_cast<std::size_t>(l)];
  }
  std::vector<std::uint8_t> omega(binary.size(), 0);
  if (sizes.empty()) return omega;
  const auto best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < labels.size(); ++i) omega[i] = labels[i] == best ? 1 : 0;
  return omega;
}

double connectivity_error(const Image& pred, const Image& gt, const MetricsConfig& cfg) {
  require_same_shape(pred.shape(), gt.shape(), "connectivity_error");
  const std::size_t h = pred.height();
  const std::size_t w = pred.width();
  const std::size_t n = pred.size();
  if (n == 0) return 0.0;
  const auto levels = static_cast<int>(std::lround(1.0 / cfg.connectivity_step));
  std::vector<double> level_map(n, -1.0);
  std::vector<std::uint8_t> both(n);
  for (int k = 1; k <= levels; ++k) {
    const double t = static_cast<double>(k) / levels;
    const double prev = static_cast<double>(k - 1) / levels;
    for (std::size_t i = 0; i < n; ++i) both[i] = (pred[i] >= t && gt[i] >= t) ? 1 : 0;
    const auto omega = largest_component(both, h, w);
    for (std::size_t i = 0; i < n; ++i) {
      if (level_map[i] == -1.0 && omega[i] == 0) level_map[i] = prev;
    }
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double l = level_map[i] == -1.0 ? 1.0 : level_map[i];
    const double pd = pred[i] - l;
    const double gd = gt[i] - l;
    const double p_phi = 1.0 - (pd >= cfg.connectivity_theta ? pd : 0.0);
    const double g_phi = 1.0 - (gd >= cfg.connectivity_theta ? gd : 0.0);
    acc += std::abs(p_phi - g_phi);
  }
  return acc / static_cast<double>(n);
}

MetricsReport evaluate(const Image& pred, const Image& gt, const MetricsConfig& cfg) {
  check_pair(pred, gt);
  MetricsReport r;
  r.pixels = pred.size();
  if (r.pixels == 0) return r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    r.mse += d * d;
    r.sad += std::abs(d);
  }
  r.mse /= static_cast<double>(r.pixels);
  r.sad /= static_cast<double>(r.pixels);
  r.grad = gradient_error(pred, gt, cfg.gradient_sigma);
  r.conn = connectivity_error(pred, gt, cfg);
  return r;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "method,mse_x1e3,sad_x1e3,grad_x1e5,conn_x1e5,pixels,samples,skipped\n";
  out.setf(std::ios::fixed);
  out.precision(6);
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << row.method << ',' << r.mse * 1e3 << ',' << r.sad * 1e3 << ',' << r.grad * 1e5 << ','
        << r.conn * 1e5 << ',' << r.pixels << ',' << row.samples << ',' << row.skipped << '\n';
  }
  return out.str();
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << metrics_csv(rows);
}

}  // namespace matte
