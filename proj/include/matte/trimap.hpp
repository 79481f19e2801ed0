#pragma once

#include <cstddef>
#include <stdexcept>

#include "matte/tensor.hpp"

namespace matte {

/// The mask has no foreground pixel, so no object box exists.
class EmptyObjectError : public std::runtime_error {
 public:
  EmptyObjectError() : std::runtime_error("empty object: mask has no foreground pixel") {}
};

/// Half-open pixel box: columns [x0, x1), rows [y0, y1).
struct BBox {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t x1 = 0;
  std::size_t y1 = 0;

  std::size_t width() const { return x1 - x0; }
  std::size_t height() const { return y1 - y0; }
  bool operator==(const BBox&) const = default;
};

struct TrimapConfig {
  /// Erosion/dilation radius as a fraction of the mean object dimension.
  double rate = 0.03;
  std::size_t min_radius = 1;

  void validate() const;
};

enum class MorphMode { erode, dilate };

/// Tightest box around pixels with value >= 0.5. Throws EmptyObjectError.
BBox mask_bbox(const Image& mask);

/// Square (2r+1)^2 structuring element. Out-of-image pixels count as
/// background for erosion and are ignored for dilation. Output is binary.
Image morph(const Image& mask, std::size_t radius, MorphMode mode);

std::size_t trimap_radius(const BBox& box, const TrimapConfig& cfg);

/// Eroded core -> 1.0, dilated-minus-eroded band -> 0.5, remainder -> 0.0.
Image generate_trimap(const Image& mask, const TrimapConfig& cfg = {});

/// Same construction with explicit erosion and dilation radii.
Image trimap_from_radii(const Image& mask, std::size_t erode_radius, std::size_t dilate_radius);

/// Binary mask (alpha >= 0.5) of a single-channel matte.
Image binarize(const Image& alpha);

}  // namespace matte
