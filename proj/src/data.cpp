#include "matte/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include "json.hpp"

#include "matte/image_io.hpp"
#include "matte/losses.hpp"

namespace matte {

namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, 5> kPlaneDirs = {"images", "alphas", "fgs", "bgs", "trimaps"};

double quantized(double v) { return quantize(v) / 255.0; }

struct Ellipse {
  double cx, cy, rx, ry, cos_t, sin_t;
  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = (dx * cos_t + dy * sin_t) / rx;
    const double v = (-dx * sin_t + dy * cos_t) / ry;
    return u * u + v * v <= 1.0;
  }
};

struct Stroke {
  std::vector<std::array<double, 2>> points;
  double half_width;
  double x0, y0, x1, y1;  // bounding box padded by half_width

  bool contains(double x, double y) const {
    if (x < x0 || x > x1 || y < y0 || y > y1) return false;
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
      const auto& a = points[i];
      const auto& b = points[i + 1];
      const double vx = b[0] - a[0];
      const double vy = b[1] - a[1];
      const double len2 = vx * vx + vy * vy;
      double t = len2 > 0 ? ((x - a[0]) * vx + (y - a[1]) * vy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double px = a[0] + t * vx - x;
      const double py = a[1] + t * vy - y;
      if (px * px + py * py <= half_width * half_width) return true;
    }
    return false;
  }
};

// Smooth lattice noise in [0, 1] sampled at `cells` cells across the image.
class ValueNoise {
 public:
  ValueNoise(std::mt19937_64& rng, std::size_t cells) : n_(cells + 2), lattice_(n_ * n_) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : lattice_) v = u(rng);
  }
  double at(double fx, double fy) const {  // fx, fy in lattice units
    const auto ix = static_cast<std::size_t>(fx);
    const auto iy = static_cast<std::size_t>(fy);
    const double tx = smooth(fx - static_cast<double>(ix));
    const double ty = smooth(fy - static_cast<double>(iy));
    const double a = lattice_[iy * n_ + ix] * (1 - tx) + lattice_[iy * n_ + ix + 1] * tx;
    const double b = lattice_[(iy + 1) * n_ + ix] * (1 - tx) + lattice_[(iy + 1) * n_ + ix + 1] * tx;
    return a * (1 - ty) + b * ty;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  std::size_t n_;
  std::vector<double> lattice_;
};

// Sum of octaves, normalised to [0, 1].
double fractal(const std::vector<ValueNoise>& octaves, const std::vector<std::size_t>& cells,
               double x, double y, double size) {
  double acc = 0.0;
  double amp = 1.0;
  double total = 0.0;
  for (std::size_t o = 0; o < octaves.size(); ++o) {
    const double scale = static_cast<double>(cells[o]) / size;
    acc += amp * octaves[o].at(x * scale, y * scale);
    total += amp;
    amp *= 0.5;
  }
  return acc / total;
}

void check_size(std::size_t size) {
  if (size < 32) throw std::invalid_argument("synthetic images must be at least 32 px, got " + std::to_string(size));
}

Image scale_plane(const Image& img, double scale) {
  const auto h = static_cast<std::size_t>(std::lround(static_cast<double>(img.height()) * scale));
  const auto w = static_cast<std::size_t>(std::lround(static_cast<double>(img.width()) * scale));
  return resize_bilinear(img, std::max<std::size_t>(h, 1), std::max<std::size_t>(w, 1));
}

Image crop_plane(const Image& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  Image out(h, w, img.channels());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < img.channels(); ++c) out(y, x, c) = img(top + y, left + x, c);
    }
  }
  return out;
}

Image flip_plane(const Image& img) {
  Image out(img.shape());
  const std::size_t w = img.width();
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < img.channels(); ++c) out(y, x, c) = img(y, w - 1 - x, c);
    }
  }
  return out;
}

template <typename Fn>
Sample map_planes(const Sample& s, Fn fn) {
  Sample out;
  out.id = s.id;
  out.image = fn(s.image);
  out.gt_alpha = fn(s.gt_alpha);
  out.gt_fg = fn(s.gt_fg);
  out.gt_bg = fn(s.gt_bg);
  out.mask = fn(s.mask);
  out.trimap = fn(s.trimap);
  return out;
}

bool window_has_unknown(const Image& trimap, std::size_t top, std::size_t left, std::size_t crop) {
  for (std::size_t y = top; y < top + crop; ++y) {
    for (std::size_t x = left; x < left + crop; ++x) {
      if (trimap_level(trimap(y, x)) == TrimapLevel::unknown) return true;
    }
  }
  return false;
}

}  // namespace

std::pair<Image, Image> synth_foreground(std::uint64_t seed, std::size_t size) {
  check_size(size);
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto s = static_cast<double>(size);
  auto range = [&](double a, double b) { return a + (b - a) * u(rng); };

  std::vector<Ellipse> ellipses;
  const int n_ellipses = 2 + static_cast<int>(rng() % 3);
  for (int i = 0; i < n_ellipses; ++i) {
    const double t = range(0.0, std::numbers::pi);
    ellipses.push_back({range(0.35, 0.65) * s, range(0.35, 0.65) * s, range(0.10, 0.22) * s,
                        range(0.10, 0.22) * s, std::cos(t), std::sin(t)});
  }

  std::vector<Stroke> strokes;
  const int n_strokes = 3 + static_cast<int>(rng() % 5);
  const Ellipse& base = ellipses.front();
  for (int i = 0; i < n_strokes; ++i) {
    const double phi = range(0.0, 2.0 * std::numbers::pi);
    // Start just inside the first ellipse and head outward.
    const double lx = 0.9 * base.rx * std::cos(phi);
    const double ly = 0.9 * base.ry * std::sin(phi);
    const double sx = base.cx + lx * base.cos_t - ly * base.sin_t;
    const double sy = base.cy + lx * base.sin_t + ly * base.cos_t;
    const double dir = std::atan2(sy - base.cy, sx - base.cx) + range(-0.4, 0.4);
    const double len = range(0.12, 0.30) * s;
    const double ex = std::clamp(sx + len * std::cos(dir), 1.0, s - 1.0);
    const double ey = std::clamp(sy + len * std::sin(dir), 1.0, s - 1.0);
    const double bend = range(-0.3, 0.3) * len;
    const double mx = 0.5 * (sx + ex) - bend * std::sin(dir);
    const double my = 0.5 * (sy + ey) + bend * std::cos(dir);
    Stroke st;
    st.half_width = range(0.5, 1.0);
    st.x0 = st.y0 = s;
    st.x1 = st.y1 = 0.0;
    constexpr int kSegments = 24;
    for (int k = 0; k <= kSegments; ++k) {
      const double t = static_cast<double>(k) / kSegments;
      const double px = (1 - t) * (1 - t) * sx + 2 * (1 - t) * t * mx + t * t * ex;
      const double py = (1 - t) * (1 - t) * sy + 2 * (1 - t) * t * my + t * t * ey;
      st.points.push_back({px, py});
      st.x0 = std::min(st.x0, px - st.half_width);
      st.y0 = std::min(st.y0, py - st.half_width);
      st.x1 = std::max(st.x1, px + st.half_width);
      st.y1 = std::max(st.y1, py + st.half_width);
    }
    strokes.push_back(std::move(st));
  }

  // Colour: two random endpoints along a random direction plus mild noise.
  std::array<double, 3> c0{};
  std::array<double, 3> c1{};
  for (std::size_t c = 0; c < 3; ++c) {
    c0[c] = range(0.05, 0.95);
    c1[c] = range(0.05, 0.95);
  }
  const double gdir = range(0.0, 2.0 * std::numbers::pi);
  const std::vector<std::size_t> cells = {4, 8};
  std::vector<ValueNoise> noise;
  for (const auto c : cells) noise.emplace_back(rng, c);

  constexpr int kSub = 4;
  Image alpha(size, size, 1);
  Image fg(size, size, 3);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSub;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSub;
          bool in = false;
          for (const auto& e : ellipses) in = in || e.contains(px, py);
          for (const auto& st : strokes) in = in || st.contains(px, py);
          hits += in ? 1 : 0;
        }
      }
      alpha(y, x) = quantized(static_cast<double>(hits) / (kSub * kSub));
      const double xc = static_cast<double>(x) + 0.5;
      const double yc = static_cast<double>(y) + 0.5;
      const double t = std::clamp(0.5 + ((xc / s - 0.5) * std::cos(gdir) + (yc / s - 0.5) * std::sin(gdir)), 0.0, 1.0);
      const double n = fractal(noise, cells, xc, yc, s) - 0.5;
      for (std::size_t c = 0; c < 3; ++c) {
        fg(y, x, c) = quantized(std::clamp(c0[c] * (1 - t) + c1[c] * t + 0.3 * n, 0.0, 1.0));
      }
    }
  }
  return {std::move(fg), std::move(alpha)};
}

Image synth_background(std::uint64_t seed, std::size_t size) {
  check_size(size);
  std::mt19937_64 rng(seed * 0xD1B54A32D192ED03ULL + 7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto s = static_cast<double>(size);
  std::array<double, 3> c0{};
  std::array<double, 3> c1{};
  for (std::size_t c = 0; c < 3; ++c) {
    c0[c] = u(rng);
    c1[c] = u(rng);
  }
  const double gdir = 2.0 * std::numbers::pi * u(rng);
  const std::vector<std::size_t> cells = {3, 6, 12, 24};
  std::array<std::vector<ValueNoise>, 3> noise;
  for (auto& ch : noise) {
    for (const auto c : cells) ch.emplace_back(rng, c);
  }
  Image bg(size, size, 3);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double xc = static_cast<double>(x) + 0.5;
      const double yc = static_cast<double>(y) + 0.5;
      const double t = std::clamp(0.5 + ((xc / s - 0.5) * std::cos(gdir) + (yc / s - 0.5) * std::sin(gdir)), 0.0, 1.0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double grad = c0[c] * (1 - t) + c1[c] * t;
        bg(y, x, c) = quantized(0.55 * grad + 0.45 * fractal(noise[c], cells, xc, yc, s));
      }
    }
  }
  return bg;
}

Sample make_sample(const std::string& id, std::uint64_t fg_seed, std::uint64_t bg_seed,
                   const SampleOptions& opts) {
  Sample s;
  s.id = id;
  auto [fg, alpha] = synth_foreground(fg_seed, opts.size);
  s.gt_fg = std::move(fg);
  s.gt_alpha = std::move(alpha);
  s.gt_bg = synth_background(bg_seed, opts.size);
  s.image = composite(s.gt_alpha, s.gt_fg, s.gt_bg);
  s.mask = binarize(s.gt_alpha);
  opts.trimap.validate();
  const std::size_t r = trimap_radius(mask_bbox(s.mask), opts.trimap);
  if (opts.jitter_trimap) {
    std::mt19937_64 rng(fg_seed ^ (bg_seed << 1));
    auto jitter = [&](std::size_t base) {
      const int d = static_cast<int>(rng() % 3) - 1;
      return static_cast<std::size_t>(std::max(1, static_cast<int>(base) + d));
    };
    const std::size_t er = jitter(r);
    const std::size_t dr = jitter(r);
    s.trimap = trimap_from_radii(s.mask, er, dr);
  } else {
    s.trimap = trimap_from_radii(s.mask, r, r);
  }
  return s;
}

Image resize_bilinear(const Image& image, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw ShapeError("resize: target dims must be positive");
  if (h == image.height() && w == image.width()) return image;
  const std::size_t c = image.channels();
  Image out(h, w, c);
  const double sy = static_cast<double>(image.height()) / static_cast<double>(h);
  const double sx = static_cast<double>(image.width()) / static_cast<double>(w);
  const auto max_y = static_cast<double>(image.height() - 1);
  const auto max_x = static_cast<double>(image.width() - 1);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height() - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width() - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double a = image(y0, x0, ch) * (1 - tx) + image(y0, x1, ch) * tx;
        const double b = image(y1, x0, ch) * (1 - tx) + image(y1, x1, ch) * tx;
        out(y, x, ch) = a * (1 - ty) + b * ty;
      }
    }
  }
  return out;
}

Image resize_nearest(const Image& image, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw ShapeError("resize: target dims must be positive");
  Image out(h, w, image.channels());
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t sy = std::min(image.height() - 1, y * image.height() / h);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx = std::min(image.width() - 1, x * image.width() / w);
      for (std::size_t c = 0; c < image.channels(); ++c) out(y, x, c) = image(sy, sx, c);
    }
  }
  return out;
}

std::pair<Image, double> resize_cap(const Image& image, std::size_t max_edge) {
  if (max_edge < 1) throw std::invalid_argument("resize_cap: max_edge must be >= 1");
  const std::size_t longest = std::max(image.height(), image.width());
  if (longest <= max_edge) return {image, 1.0};
  const double scale = static_cast<double>(max_edge) / static_cast<double>(longest);
  const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(image.height()) * scale)));
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(image.width()) * scale)));
  return {resize_bilinear(image, h, w), scale};
}

Sample apply_augment(const Sample& sample, const AugmentPlan& plan, const TrimapConfig& trimap) {
  Sample s = sample;
  if (plan.scale != 1.0) {
    s.gt_alpha = scale_plane(sample.gt_alpha, plan.scale);
    s.gt_fg = scale_plane(sample.gt_fg, plan.scale);
    s.gt_bg = scale_plane(sample.gt_bg, plan.scale);
    s.image = composite(s.gt_alpha, s.gt_fg, s.gt_bg);
    s.mask = binarize(s.gt_alpha);
    s.trimap = generate_trimap(s.mask, trimap);
  }
  if (plan.crop != 0) {
    if (plan.top + plan.crop > s.image.height() || plan.left + plan.crop > s.image.width()) {
      throw ShapeError("augment: crop " + std::to_string(plan.crop) + " at (" +
                       std::to_string(plan.top) + ", " + std::to_string(plan.left) +
                       ") exceeds " + s.image.shape().str());
    }
    s = map_planes(s, [&](const Image& p) { return crop_plane(p, plan.top, plan.left, plan.crop, plan.crop); });
  }
  if (plan.flip) s = map_planes(s, flip_plane);
  return s;
}

Sample augment(const Sample& sample, std::uint64_t seed, std::size_t crop, const AugmentOptions& opts) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto min_dim = static_cast<double>(std::min(sample.image.height(), sample.image.width()));
  if (crop == 0 || static_cast<double>(crop) > min_dim * opts.scale_max) {
    throw ShapeError("augment: crop " + std::to_string(crop) + " larger than scaled sample " +
                     sample.image.shape().str());
  }
  AugmentPlan plan;
  // Never scale below the crop size.
  const double lo = std::max(opts.scale_min, (static_cast<double>(crop) + 0.5) / min_dim);
  const double hi = std::max(lo, opts.scale_max);
  plan.scale = lo + (hi - lo) * u(rng);
  Sample scaled = apply_augment(sample, AugmentPlan{plan.scale, 0, 0, 0, false}, opts.trimap);

  const std::size_t h = scaled.image.height();
  const std::size_t w = scaled.image.width();
  plan.crop = crop;
  bool found = false;
  for (std::size_t attempt = 0; attempt < opts.max_attempts && !found; ++attempt) {
    const std::size_t top = static_cast<std::size_t>(rng() % (h - crop + 1));
    const std::size_t left = static_cast<std::size_t>(rng() % (w - crop + 1));
    if (window_has_unknown(scaled.trimap, top, left, crop)) {
      plan.top = top;
      plan.left = left;
      found = true;
    }
  }
  if (!found) {
    plan.top = (h - crop) / 2;
    plan.left = (w - crop) / 2;
  }
  plan.flip = u(rng) < opts.flip_probability;
  return apply_augment(scaled, AugmentPlan{1.0, plan.crop, plan.top, plan.left, plan.flip}, opts.trimap);
}

std::vector<ManifestEntry> DatasetManifest::split(const std::string& tag) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == tag) out.push_back(e);
  }
  return out;
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  std::set<std::uint64_t> train_fg;
  std::set<std::uint64_t> test_fg;
  for (const auto& e : entries) {
    if (!ids.insert(e.id).second) throw DataError("manifest: duplicate id " + e.id);
    if (e.split == "train") {
      train_fg.insert(e.fg_seed);
    } else if (e.split == "test") {
      test_fg.insert(e.fg_seed);
    } else {
      throw DataError("manifest: unknown split '" + e.split + "' for " + e.id);
    }
  }
  for (const auto s : test_fg) {
    if (train_fg.count(s) != 0) throw DataError("manifest: train and test share a foreground seed");
  }
}

DatasetManifest plan_dataset(const DatasetOptions& opts) {
  if (opts.count == 0) throw std::invalid_argument("dataset: count must be positive");
  if (opts.test_count > opts.count) throw std::invalid_argument("dataset: test_count exceeds count");
  DatasetManifest m;
  m.master_seed = opts.master_seed;
  m.size = opts.sample.size;
  std::mt19937_64 rng(opts.master_seed);
  std::set<std::uint64_t> used;
  for (std::size_t i = 0; i < opts.count; ++i) {
    ManifestEntry e;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%05zu", i);
    e.id = buf;
    e.split = i + opts.test_count >= opts.count ? "test" : "train";
    do {
      e.fg_seed = rng() >> 16;
    } while (!used.insert(e.fg_seed).second);
    e.bg_seed = rng() >> 16;
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::string manifest_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["master_seed"] = m.master_seed;
  j["size"] = m.size;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back({{"id", e.id}, {"split", e.split}, {"fg_seed", e.fg_seed}, {"bg_seed", e.bg_seed}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest write_dataset(const fs::path& root, const DatasetOptions& opts) {
  const DatasetManifest m = plan_dataset(opts);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw DataError("cannot create " + root.string() + ": " + ec.message());
  for (const char* dir : kPlaneDirs) {
    fs::create_directories(root / dir, ec);
    if (ec) throw DataError("cannot create " + (root / dir).string() + ": " + ec.message());
  }
  for (const auto& e : m.entries) {
    const Sample s = make_sample(e.id, e.fg_seed, e.bg_seed, opts.sample);
    const std::string file = e.id + ".png";
    write_image(root / "images" / file, s.image);
    write_image(root / "alphas" / file, s.gt_alpha);
    write_image(root / "fgs" / file, s.gt_fg);
    write_image(root / "bgs" / file, s.gt_bg);
    write_image(root / "trimaps" / file, s.trimap);
  }
  const fs::path tmp = root / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << manifest_json(m);
  }
  fs::rename(tmp, root / "manifest.json");
  return m;
}

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  DatasetManifest m;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    m.version = j.at("version").get<int>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.size = j.value("size", std::size_t{96});
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("id").get<std::string>(), e.at("split").get<std::string>(),
                           e.at("fg_seed").get<std::uint64_t>(), e.at("bg_seed").get<std::uint64_t>()});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(path.string() + ": malformed manifest: " + ex.what());
  }
  m.validate();
  return m;
}

Sample load_sample(const fs::path& root, const ManifestEntry& entry) {
  Sample s;
  s.id = entry.id;
  const std::string file = entry.id + ".png";
  try {
    s.image = read_image(root / "images" / file);
    s.gt_alpha = read_image(root / "alphas" / file);
    s.gt_fg = read_image(root / "fgs" / file);
    s.gt_bg = read_image(root / "bgs" / file);
    s.trimap = read_trimap(root / "trimaps" / file);
  } catch (const DataError& ex) {
    throw DataError("sample " + entry.id + ": " + ex.what());
  }
  const Shape rgb = s.image.shape();
  const Shape gray{rgb.h, rgb.w, 1};
  if (rgb.c != 3 || !(s.gt_fg.shape() == rgb) || !(s.gt_bg.shape() == rgb) ||
      !(s.gt_alpha.shape() == gray) || !(s.trimap.shape() == gray)) {
    throw DataError("sample " + entry.id + ": plane dimensions disagree");
  }
  s.mask = binarize(s.gt_alpha);
  return s;
}

}  // namespace matte
