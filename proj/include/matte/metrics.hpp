#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "matte/tensor.hpp"

namespace matte {

/// Whole-image matte quality metrics. Every value is a plain per-pixel mean;
/// display scaling is applied only when reports are written.
struct MetricsReport {
  double mse = 0.0;
  double sad = 0.0;
  double grad = 0.0;
  double conn = 0.0;
  std::size_t pixels = 0;
};

struct MetricsConfig {
  /// Standard deviation of the first-order Gaussian derivative filter.
  double gradient_sigma = 1.4;
  /// Threshold spacing for the connectivity levels 0, step, ..., 1.
  double connectivity_step = 0.1;
  /// Distances below this count as fully connected.
  double connectivity_theta = 0.15;
};

MetricsReport evaluate(const Image& pred, const Image& gt, const MetricsConfig& cfg = {});

/// Gradient magnitude from separable Gaussian-derivative filters with
/// replicated borders.
Image gaussian_gradient_magnitude(const Image& image, double sigma);
double gradient_error(const Image& pred, const Image& gt, double sigma);

/// Labels of 4-connected foreground components, -1 for background. Labels are
/// numbered in raster order of each component's first pixel.
std::vector<int> label_components(const std::vector<std::uint8_t>& binary, std::size_t h,
                                  std::size_t w);
/// Mask of the largest 4-connected component; ties go to the lowest label.
std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& binary,
                                            std::size_t h, std::size_t w);
double connectivity_error(const Image& pred, const Image& gt, const MetricsConfig& cfg = {});

struct MetricsRow {
  std::string method;
  MetricsReport report;
  std::size_t samples = 0;
  std::size_t skipped = 0;
};

/// Header plus one row per method. MSE/SAD are shown x1e3, Grad/Conn x1e5.
std::string metrics_csv(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

}  // namespace matte
