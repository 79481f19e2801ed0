#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "matte/tensor.hpp"
#include "matte/trimap.hpp"

namespace matte {

/// One training/evaluation example. Every plane shares the same H x W.
struct Sample {
  std::string id;
  Image image;     // H x W x 3, composite of the three layers below
  Image gt_alpha;  // H x W x 1
  Image gt_fg;     // H x W x 3
  Image gt_bg;     // H x W x 3
  Image mask;      // gt_alpha >= 0.5
  Image trimap;    // {0, 0.5, 1}
};

/// Procedural object: union of anti-aliased ellipses plus thin strokes, on a
/// smoothly varying colour field. Values are multiples of 1/255 so that 8-bit
/// storage is lossless.
std::pair<Image, Image> synth_foreground(std::uint64_t seed, std::size_t size);

/// Multi-octave value noise over a colour gradient, in [0, 1].
Image synth_background(std::uint64_t seed, std::size_t size);

struct SampleOptions {
  std::size_t size = 96;
  TrimapConfig trimap;
  /// Perturb erosion/dilation radii by up to +-1 px to mimic coarse masks.
  bool jitter_trimap = false;
};

Sample make_sample(const std::string& id, std::uint64_t fg_seed, std::uint64_t bg_seed,
                   const SampleOptions& opts = {});

/// Bilinear resize with half-pixel centres.
Image resize_bilinear(const Image& image, std::size_t h, std::size_t w);
Image resize_nearest(const Image& image, std::size_t h, std::size_t w);

/// Downscales so the longer edge is at most max_edge. Returns the scale applied.
std::pair<Image, double> resize_cap(const Image& image, std::size_t max_edge);

struct AugmentPlan {
  double scale = 1.0;
  std::size_t crop = 0;  // 0 keeps the full (scaled) extent
  std::size_t top = 0;
  std::size_t left = 0;
  bool flip = false;
};

struct AugmentOptions {
  double scale_min = 0.75;
  double scale_max = 1.25;
  double flip_probability = 0.5;
  std::size_t max_attempts = 10;
  TrimapConfig trimap;
};

/// Applies scale (re-deriving mask and trimap), crop, then horizontal flip to
/// every plane identically.
Sample apply_augment(const Sample& sample, const AugmentPlan& plan, const TrimapConfig& trimap = {});

/// Random scale, a crop x crop window containing at least one unknown trimap
/// pixel (centre crop after max_attempts misses), and a random flip.
Sample augment(const Sample& sample, std::uint64_t seed, std::size_t crop,
               const AugmentOptions& opts = {});

struct ManifestEntry {
  std::string id;
  std::string split;  // "train" or "test"
  std::uint64_t fg_seed = 0;
  std::uint64_t bg_seed = 0;
};

struct DatasetManifest {
  int version = 1;
  std::uint64_t master_seed = 0;
  std::size_t size = 96;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(const std::string& tag) const;
  void validate() const;
};

struct DatasetOptions {
  std::size_t count = 576;
  std::size_t test_count = 64;
  std::uint64_t master_seed = 0;
  SampleOptions sample;
};

/// Seeds and split tags only; no files touched.
DatasetManifest plan_dataset(const DatasetOptions& opts);

/// Writes <root>/{images,alphas,fgs,bgs,trimaps}/<id>.png and manifest.json.
DatasetManifest write_dataset(const std::filesystem::path& root, const DatasetOptions& opts);

std::string manifest_json(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& root);

/// Loads one sample's planes; mask is re-derived from the stored alpha.
Sample load_sample(const std::filesystem::path& root, const ManifestEntry& entry);

}  // namespace matte
