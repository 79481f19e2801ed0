#include "matte/trimap.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace matte {

namespace {

void require_single_channel(const Image& m, const char* what) {
  if (m.channels() != 1) {
    throw ShapeError(std::string(what) + ": expected single-channel mask, got " + m.shape().str());
  }
}

}  // namespace

void TrimapConfig::validate() const {
  if (!(rate > 0.0 && rate < 0.5)) {
    throw std::invalid_argument("trimap rate must lie in (0, 0.5), got " + std::to_string(rate));
  }
  if (min_radius < 1) throw std::invalid_argument("trimap min_radius must be >= 1");
}

BBox mask_bbox(const Image& mask) {
  require_single_channel(mask, "mask_bbox");
  bool found = false;
  BBox box{mask.width(), mask.height(), 0, 0};
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < mask.width(); ++x) {
      if (mask(y, x) < 0.5) continue;
      found = true;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x + 1);
      box.y1 = std::max(box.y1, y + 1);
    }
  }
  if (!found) throw EmptyObjectError();
  return box;
}

Image morph(const Image& mask, std::size_t radius, MorphMode mode) {
  require_single_channel(mask, "morph");
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  Image out(mask.shape());
  if (radius == 0) {
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] >= 0.5 ? 1.0 : 0.0;
    return out;
  }
  // Integral image of foreground counts, (h+1) x (w+1).
  std::vector<std::size_t> integral((h + 1) * (w + 1), 0);
  for (std::size_t y = 0; y < h; ++y) {
    std::size_t row = 0;
    for (std::size_t x = 0; x < w; ++x) {
      row += mask(y, x) >= 0.5 ? 1 : 0;
      integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
    }
  }
  const auto r = static_cast<std::ptrdiff_t>(radius);
  const std::size_t full = (2 * radius + 1) * (2 * radius + 1);
  for (std::size_t y = 0; y < h; ++y) {
    const auto ya = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(y) - r));
    const std::size_t yb = std::min(h, y + radius + 1);
    for (std::size_t x = 0; x < w; ++x) {
      const auto xa = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(x) - r));
      const std::size_t xb = std::min(w, x + radius + 1);
      const std::size_t count = integral[yb * (w + 1) + xb] - integral[ya * (w + 1) + xb] -
                                integral[yb * (w + 1) + xa] + integral[ya * (w + 1) + xa];
      const bool on = mode == MorphMode::erode ? count == full : count > 0;
      out(y, x) = on ? 1.0 : 0.0;
    }
  }
  return out;
}

std::size_t trimap_radius(const BBox& box, const TrimapConfig& cfg) {
  const double mean_dim = 0.5 * static_cast<double>(box.height() + box.width());
  const auto r = static_cast<std::size_t>(std::lround(cfg.rate * mean_dim));
  return std::max(cfg.min_radius, r);
}

Image trimap_from_radii(const Image& mask, std::size_t erode_radius, std::size_t dilate_radius) {
  const Image core = morph(mask, erode_radius, MorphMode::erode);
  const Image grown = morph(mask, dilate_radius, MorphMode::dilate);
  Image trimap(mask.shape());
  for (std::size_t i = 0; i < trimap.size(); ++i) {
    trimap[i] = core[i] > 0.5 ? 1.0 : (grown[i] > 0.5 ? 0.5 : 0.0);
  }
  return trimap;
}

Image generate_trimap(const Image& mask, const TrimapConfig& cfg) {
  cfg.validate();
  const std::size_t radius = trimap_radius(mask_bbox(mask), cfg);
  return trimap_from_radii(mask, radius, radius);
}

Image binarize(const Image& alpha) {
  require_single_channel(alpha, "binarize");
  Image out(alpha.shape());
  for (std::size_t i = 0; i < alpha.size(); ++i) out[i] = alpha[i] >= 0.5 ? 1.0 : 0.0;
  return out;
}

}  // namespace matte
