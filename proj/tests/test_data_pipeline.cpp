#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include "matte/data.hpp"
#include "matte/image_io.hpp"
#include "matte/losses.hpp"
#include "oracles.hpp"

using namespace matte;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double soft_fraction(const Image& alpha) {
  std::size_t n = 0;
  for (const double a : alpha.vec()) n += (a > 0.0 && a < 1.0) ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(alpha.size());
}

double adjacent_correlation(const Image& img) {
  std::vector<double> a, b;
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x + 1 < img.width(); ++x)
      for (std::size_t c = 0; c < img.channels(); ++c) {
        a.push_back(img(y, x, c));
        b.push_back(img(y, x + 1, c));
      }
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("synthetic foreground contract") {
  const auto [fg1, a1] = synth_foreground(3, 96);
  const auto [fg2, a2] = synth_foreground(3, 96);
  CHECK(fg1 == fg2);
  CHECK(a1 == a2);
  CHECK(fg1.shape() == Shape{96, 96, 3});
  CHECK(a1.shape() == Shape{96, 96, 1});
  CHECK_THROWS(synth_foreground(1, 31));

  double lo = 1.0, hi = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const double f = soft_fraction(synth_foreground(seed, 96).second);
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  CHECK(lo >= 0.01);
  CHECK(hi <= 0.30);
}

TEST_CASE("synthetic background contract") {
  CHECK(synth_background(5, 64) == synth_background(5, 64));
  CHECK(!(synth_background(5, 64) == synth_background(6, 64)));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Image bg = synth_background(seed, 96);
    for (const double v : bg.vec()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(adjacent_correlation(bg) > 0.5);
  }
}

TEST_CASE("make_sample satisfies the compositing equation") {
  const Sample s = make_sample("x", 10, 20);
  CHECK(oracle::max_abs_diff(s.image, composite(s.gt_alpha, s.gt_fg, s.gt_bg)) == 0.0);
  CHECK(s.mask == binarize(s.gt_alpha));
  for (const double t : s.trimap.vec()) CHECK((t == 0.0 || t == 0.5 || t == 1.0));
  SampleOptions jitter;
  jitter.jitter_trimap = true;
  const Sample j = make_sample("x", 10, 20, jitter);
  CHECK(j.image == s.image);
}

TEST_CASE("resize_cap examples") {
  const Image big(3000, 1000, 1, 0.5);
  const auto [small, scale] = resize_cap(big, 1500);
  CHECK(small.shape() == Shape{1500, 500, 1});
  CHECK(scale == 0.5);
  const Image little(40, 30, 3, 0.1);
  const auto [same, s1] = resize_cap(little, 1500);
  CHECK(same == little);
  CHECK(s1 == 1.0);
}

TEST_CASE("bilinear resize preserves constants and matches a 2x downsample") {
  const Image c(10, 14, 2, 0.3);
  const Image r = resize_bilinear(c, 7, 5);
  for (const double v : r.vec()) CHECK(v == doctest::Approx(0.3).epsilon(1e-14));
  std::mt19937_64 rng(1);
  const Image x = oracle::random_tensor(rng, {8, 8, 1});
  const Image h = resize_bilinear(x, 4, 4);
  CHECK(h(1, 2) == doctest::Approx(0.25 * (x(2, 4) + x(2, 5) + x(3, 4) + x(3, 5))));
}

TEST_CASE("augment examples") {
  const Sample s = make_sample("a", 1, 2);
  const Sample id = apply_augment(s, AugmentPlan{});
  CHECK(id.image == s.image);
  CHECK(id.trimap == s.trimap);

  AugmentPlan flip;
  flip.flip = true;
  const Sample twice = apply_augment(apply_augment(s, flip), flip);
  CHECK(twice.image == s.image);
  CHECK(twice.gt_alpha == s.gt_alpha);
  CHECK(twice.gt_fg == s.gt_fg);
  CHECK(twice.trimap == s.trimap);
  CHECK(apply_augment(s, flip).image(5, 0, 1) == s.image(5, 95, 1));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Sample a = augment(s, seed, 64);
    CHECK(a.image.shape() == Shape{64, 64, 3});
    CHECK(a.trimap.shape() == Shape{64, 64, 1});
    bool unknown = false;
    for (const double t : a.trimap.vec()) unknown = unknown || t == 0.5;
    CHECK(unknown);
    CHECK(oracle::max_abs_diff(a.image, composite(a.gt_alpha, a.gt_fg, a.gt_bg)) <= 1e-12);
    CHECK(a.mask == binarize(a.gt_alpha));
  }
  CHECK(augment(s, 7, 64).image == augment(s, 7, 64).image);
  CHECK_THROWS_AS(augment(s, 1, 200), ShapeError);
  CHECK_THROWS_AS(apply_augment(s, AugmentPlan{1.0, 64, 40, 0, false}), ShapeError);
}

TEST_CASE("dataset planning") {
  DatasetOptions o;
  o.count = 10;
  o.test_count = 3;
  o.master_seed = 9;
  const DatasetManifest m = plan_dataset(o);
  CHECK(m.entries.size() == 10);
  CHECK(m.split("test").size() == 3);
  CHECK(m.split("train").size() == 7);
  CHECK(m.entries[0].id == "s00000");
  std::set<std::uint64_t> fg;
  for (const auto& e : m.entries) fg.insert(e.fg_seed);
  CHECK(fg.size() == 10);
  CHECK(manifest_json(m) == manifest_json(plan_dataset(o)));
  o.count = 0;
  CHECK_THROWS(plan_dataset(o));

  DatasetManifest bad = m;
  bad.entries[1].id = bad.entries[0].id;
  CHECK_THROWS(bad.validate());
  bad = m;
  bad.entries[0].split = "val";
  CHECK_THROWS(bad.validate());
  bad = m;
  bad.entries[9].fg_seed = bad.entries[0].fg_seed;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("dataset files round trip") {
  const fs::path root = fresh_dir("matte_data_test");
  DatasetOptions o;
  o.count = 4;
  o.test_count = 1;
  o.master_seed = 1;
  o.sample.size = 48;
  const DatasetManifest m = write_dataset(root, o);
  const std::string first = slurp(root / "manifest.json");
  write_dataset(root, o);
  CHECK(slurp(root / "manifest.json") == first);
  const DatasetManifest back = read_manifest(root);
  CHECK(manifest_json(back) == manifest_json(m));

  for (const auto& e : back.entries) {
    const Sample ref = make_sample(e.id, e.fg_seed, e.bg_seed, o.sample);
    const Sample s = load_sample(root, e);
    CHECK(s.gt_alpha == ref.gt_alpha);
    CHECK(s.gt_fg == ref.gt_fg);
    CHECK(s.trimap == ref.trimap);
    CHECK(oracle::max_abs_diff(s.image, ref.image) <= 0.5 / 255.0 + 1e-12);
  }

  fs::remove(root / "alphas" / "s00002.png");
  CHECK_THROWS_WITH_AS(load_sample(root, back.entries[2]), doctest::Contains("s00002"), DataError);
  fs::remove_all(root);
}

TEST_CASE("image IO") {
  const fs::path dir = fresh_dir("matte_io_test");
  std::mt19937_64 rng(3);
  Image rgb = oracle::random_tensor(rng, {5, 7, 3}, 0, 1);
  for (auto& v : rgb.vec()) v = quantize(v) / 255.0;
  write_image(dir / "a.png", rgb);
  CHECK(read_image(dir / "a.png") == rgb);
  write_image(dir / "sub" / "g.pgm", Image(3, 2, 1, 1.0));
  CHECK(read_image(dir / "sub" / "g.pgm") == Image(3, 2, 1, 1.0));
  CHECK(!fs::exists(dir / "a.png.tmp"));

  CHECK(quantize(0.5) == 128);
  CHECK(quantize(-1.0) == 0);
  CHECK(quantize(2.0) == 255);

  const Image tri(Shape{1, 3, 1}, {0.0, 0.5, 1.0});
  write_image(dir / "t.png", tri);
  CHECK(read_trimap(dir / "t.png") == tri);
  write_image(dir / "t127.png", Image(1, 1, 1, 127.0 / 255.0));
  CHECK(read_trimap(dir / "t127.png")[0] == 0.5);
  write_image(dir / "t90.png", Image(1, 1, 1, 90.0 / 255.0));
  CHECK_THROWS_AS(read_trimap(dir / "t90.png"), DataError);

  CHECK_THROWS_AS(read_image(dir / "missing.png"), DataError);
  std::ofstream(dir / "junk.png") << "not an image";
  CHECK_THROWS_AS(read_image(dir / "junk.png"), DataError);
  fs::remove_all(dir);
}
