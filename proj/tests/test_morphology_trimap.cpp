#include "doctest.h"

#include <random>

#include "matte/trimap.hpp"
#include "oracles.hpp"

using namespace matte;

TEST_CASE("mask_bbox examples") {
  Image m(8, 8, 1);
  m(3, 5) = 1.0;
  CHECK(mask_bbox(m) == BBox{5, 3, 6, 4});
  CHECK(mask_bbox(Image(6, 9, 1, 1.0)) == BBox{0, 0, 9, 6});
  Image two(8, 8, 1);
  two(1, 1) = 1.0;
  two(4, 6) = 1.0;
  CHECK(mask_bbox(two) == BBox{1, 1, 7, 5});
  CHECK_THROWS_AS(mask_bbox(Image(4, 4, 1)), EmptyObjectError);
}

TEST_CASE("morph examples") {
  std::mt19937_64 rng(1);
  const Image m = oracle::random_mask(rng, 7, 9, 0.5);
  CHECK(morph(m, 0, MorphMode::erode) == m);
  CHECK(morph(m, 0, MorphMode::dilate) == m);

  const Image e = morph(Image(5, 5, 1, 1.0), 1, MorphMode::erode);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 5; ++x) {
      const bool interior = y >= 1 && y <= 3 && x >= 1 && x <= 3;
      CHECK(e(y, x) == (interior ? 1.0 : 0.0));
    }

  Image dot(5, 5, 1);
  dot(2, 2) = 1.0;
  const Image d = morph(dot, 1, MorphMode::dilate);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 5; ++x) {
      const bool block = y >= 1 && y <= 3 && x >= 1 && x <= 3;
      CHECK(d(y, x) == (block ? 1.0 : 0.0));
    }
}

TEST_CASE("morph agrees with a brute-force neighbourhood scan") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 60; ++t) {
    const std::size_t h = 1 + rng() % 16;
    const std::size_t w = 1 + rng() % 16;
    const Image m = oracle::random_mask(rng, h, w, 0.2 + 0.6 * (t % 5) / 4.0);
    const std::size_t r = rng() % 5;
    for (const auto mode : {MorphMode::erode, MorphMode::dilate}) {
      CHECK(morph(m, r, mode) == oracle::brute_morph(m, r, mode));
    }
  }
}

TEST_CASE("generate_trimap example and radius rule") {
  Image m(9, 9, 1);
  for (std::size_t y = 2; y < 7; ++y)
    for (std::size_t x = 2; x < 7; ++x) m(y, x) = 1.0;
  TrimapConfig cfg;
  cfg.rate = 0.1;  // round(0.1 * 5) = 1
  const Image t = generate_trimap(m, cfg);
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 9; ++x) {
      const bool core = y >= 3 && y <= 5 && x >= 3 && x <= 5;
      const bool band = y >= 1 && y <= 7 && x >= 1 && x <= 7;
      CHECK(t(y, x) == (core ? 1.0 : band ? 0.5 : 0.0));
    }

  CHECK(trimap_radius(BBox{0, 0, 100, 300}, TrimapConfig{}) == 6);
  CHECK(trimap_radius(BBox{0, 0, 4, 4}, TrimapConfig{0.03, 2}) == 2);
  CHECK_THROWS_AS(generate_trimap(Image(5, 5, 1)), EmptyObjectError);
  CHECK_THROWS(TrimapConfig{0.0, 1}.validate());
  CHECK_THROWS(TrimapConfig{0.6, 1}.validate());
}

TEST_CASE("generate_trimap matches the brute-force oracle") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 40; ++t) {
    const Image m = oracle::random_mask(rng, 8 + rng() % 24, 8 + rng() % 24, 0.6);
    if (m.vec() == std::vector<double>(m.size(), 0.0)) continue;
    const TrimapConfig cfg{0.02 + 0.01 * (t % 8), 1};
    CHECK(generate_trimap(m, cfg) == oracle::brute_trimap(m, cfg));
  }
}

TEST_CASE("trimap levels are ordered: core inside mask inside dilation") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const Image m = oracle::random_mask(rng, 20, 20, 0.7);
    const Image tri = trimap_from_radii(m, 1 + t % 3, 1 + (t / 3) % 3);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (tri[i] == 1.0) CHECK(m[i] == 1.0);
      if (m[i] == 1.0) CHECK(tri[i] >= 0.5);
    }
  }
}

TEST_CASE("binarize thresholds at one half") {
  const Image a(Shape{1, 4, 1}, {0.0, 0.49, 0.5, 1.0});
  CHECK(binarize(a) == Image(Shape{1, 4, 1}, {0, 0, 1, 1}));
}
