#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <sys/wait.h>

#include "json.hpp"
#include "matte/image_io.hpp"
#include "matte/trimap.hpp"
#include "oracles.hpp"

using namespace matte;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "matte_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(const std::string& args) {
  const fs::path out = kRoot / "stdout.txt";
  const fs::path err = kRoot / "stderr.txt";
  const std::string cmd = std::string(MATTE_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string p(const fs::path& path) { return path.string(); }

std::set<int> levels(const Image& img) {
  std::set<int> out;
  for (const double v : img.vec()) out.insert(quantize(v));
  return out;
}

struct Fixture {
  Fixture() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "gen-data examples") {
  const fs::path d = kRoot / "d";
  REQUIRE(cli("gen-data --out " + p(d) + " --count 4 --seed 1 --size 48").code == 0);
  const auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
  CHECK(m.at("entries").size() == 4);
  std::set<std::string> ids;
  for (const auto& e : m.at("entries")) ids.insert(e.at("id").get<std::string>());
  CHECK(ids.size() == 4);
  CHECK(fs::exists(d / "gen-data.config.json"));

  const std::string first = slurp(d / "manifest.json");
  REQUIRE(cli("gen-data --out " + p(d) + " --count 4 --seed 1 --size 48").code == 0);
  CHECK(slurp(d / "manifest.json") == first);

  const Run zero = cli("gen-data --out " + p(kRoot / "z") + " --count 0");
  CHECK(zero.code == 1);
  CHECK(!zero.err.empty());
  CHECK(cli("gen-data --count 3").code == 1);
  CHECK(cli("no-such-command").code == 1);
}

TEST_CASE_FIXTURE(Fixture, "config file values are overridden by flags") {
  const fs::path cfg = kRoot / "c.json";
  std::ofstream(cfg) << R"({"count": 5, "size": 40, "seed": 3})";
  const fs::path d = kRoot / "e";
  REQUIRE(cli("gen-data --config " + p(cfg) + " --out " + p(d) + " --count 6").code == 0);
  const auto resolved = nlohmann::json::parse(slurp(d / "gen-data.config.json"));
  CHECK(resolved.at("count") == 6);
  CHECK(resolved.at("size") == 40);
  CHECK(resolved.at("seed") == 3);
  CHECK(nlohmann::json::parse(slurp(d / "manifest.json")).at("entries").size() == 6);

  std::ofstream(cfg) << R"({"count": 5, "bogus": 1})";
  CHECK(cli("gen-data --config " + p(cfg) + " --out " + p(d)).code == 1);
  CHECK(cli("gen-data --config " + p(kRoot / "missing.json") + " --out " + p(d)).code == 2);
}

TEST_CASE_FIXTURE(Fixture, "trimap examples") {
  // A fully white mask: every pixel is object, so only the eroded border ring
  // becomes unknown and nothing can be background.
  write_image(kRoot / "white.png", Image(30, 40, 1, 1.0));
  REQUIRE(cli("trimap --mask " + p(kRoot / "white.png") + " --rate 0.03 --out " + p(kRoot / "tw.png")).code == 0);
  const Image tw = read_image(kRoot / "tw.png");
  CHECK(levels(tw) == std::set<int>{128, 255});
  const std::size_t r = trimap_radius(BBox{0, 0, 40, 30}, TrimapConfig{});
  for (std::size_t y = 0; y < 30; ++y)
    for (std::size_t x = 0; x < 40; ++x) {
      const bool ring = y < r || x < r || y + r >= 30 || x + r >= 40;
      CHECK(quantize(tw(y, x)) == (ring ? 128 : 255));
    }
  CHECK(fs::exists(kRoot / "tw.png.config.json"));

  // A white object on black yields all three levels, matching the oracle.
  Image obj(40, 50, 1, 0.0);
  for (std::size_t y = 8; y < 32; ++y)
    for (std::size_t x = 10; x < 42; ++x) obj(y, x) = 1.0;
  write_image(kRoot / "obj.png", obj);
  REQUIRE(cli("trimap --mask " + p(kRoot / "obj.png") + " --rate 0.1 --out " + p(kRoot / "to.png")).code == 0);
  const Image to = read_trimap(kRoot / "to.png");
  CHECK(levels(read_image(kRoot / "to.png")) == std::set<int>{0, 128, 255});
  TrimapConfig cfg;
  cfg.rate = 0.1;
  CHECK(to == oracle::brute_trimap(obj, cfg));

  write_image(kRoot / "black.png", Image(30, 40, 1, 0.0));
  const Run black = cli("trimap --mask " + p(kRoot / "black.png") + " --out " + p(kRoot / "tb.png"));
  CHECK(black.code == 2);
  CHECK(black.err.find("empty object") != std::string::npos);
  const Run missing = cli("trimap --mask " + p(kRoot / "nope.png") + " --out " + p(kRoot / "tn.png"));
  CHECK(missing.code == 2);
  CHECK(missing.err.find("nope.png") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "train, infer, eval and export-attention") {
  const fs::path d = kRoot / "ds";
  REQUIRE(cli("gen-data --out " + p(d) + " --count 6 --test-count 2 --size 48 --seed 2").code == 0);
  const std::string train = "train --data " + p(d) + " --epochs 1 --crop 32 --quiet --seed 4 --out ";
  REQUIRE(cli(train + p(kRoot / "run")).code == 0);
  for (const char* f : {"final.ckpt", "best.ckpt", "loss.csv", "config.json", "train.config.json"})
    CHECK(fs::exists(kRoot / "run" / f));
  REQUIRE(cli(train + p(kRoot / "run2")).code == 0);
  CHECK(slurp(kRoot / "run" / "final.ckpt") == slurp(kRoot / "run2" / "final.ckpt"));
  CHECK(cli("train --data " + p(kRoot / "none") + " --out " + p(kRoot / "r3")).code == 2);
  CHECK(cli("train --data " + p(d) + " --out " + p(kRoot / "r3") + " --ablation sideways").code == 1);

  const std::string ckpt = p(kRoot / "run" / "final.ckpt");
  const fs::path image = d / "images" / "s00004.png";
  const std::string image_bytes = slurp(image);
  write_image(kRoot / "ones.png", Image(48, 48, 1, 1.0));
  REQUIRE(cli("infer --checkpoint " + ckpt + " --image " + p(image) + " --trimap " + p(kRoot / "ones.png") +
              " --out " + p(kRoot / "white.png"))
              .code == 0);
  const Image white = read_image(kRoot / "white.png");
  CHECK(white.shape() == Shape{48, 48, 1});
  for (const double v : white.vec()) CHECK(v == 1.0);
  CHECK(slurp(image) == image_bytes);
  CHECK(fs::exists(kRoot / "white.png.config.json"));

  REQUIRE(cli("infer --checkpoint " + ckpt + " --image " + p(image) + " --mask " + p(d / "alphas" / "s00004.png") +
              " --out " + p(kRoot / "m.png"))
              .code == 0);
  CHECK(read_image(kRoot / "m.png").shape() == Shape{48, 48, 1});

  write_image(kRoot / "small.png", Image(30, 40, 1, 1.0));
  const Run mismatch = cli("infer --checkpoint " + ckpt + " --image " + p(image) + " --trimap " +
                           p(kRoot / "small.png") + " --out " + p(kRoot / "x.png"));
  CHECK(mismatch.code == 2);
  CHECK(mismatch.err.find("small.png") != std::string::npos);
  CHECK(cli("infer --checkpoint " + ckpt + " --image " + p(image) + " --out " + p(kRoot / "x.png")).code == 1);
  const Run no_ckpt = cli("infer --checkpoint " + p(kRoot / "absent.ckpt") + " --image " + p(image) +
                          " --trimap " + p(kRoot / "ones.png") + " --out " + p(kRoot / "x.png"));
  CHECK(no_ckpt.code == 2);
  CHECK(no_ckpt.err.find("absent.ckpt") != std::string::npos);

  const fs::path alpha = d / "alphas" / "s00004.png";
  const Run same = cli("eval --pred " + p(alpha) + " --gt " + p(alpha) + " --out " + p(kRoot / "gt.csv"));
  REQUIRE(same.code == 0);
  CHECK(slurp(kRoot / "gt.csv") ==
        "method,mse_x1e3,sad_x1e3,grad_x1e5,conn_x1e5,pixels,samples,skipped\n"
        "pred,0.000000,0.000000,0.000000,0.000000,2304,1,0\n");
  CHECK(cli("eval --pred " + p(alpha) + " --gt " + p(kRoot / "small.png") + " --out " + p(kRoot / "g2.csv")).code == 2);
  REQUIRE(cli("eval --checkpoint " + ckpt + " --data " + p(d) + " --out " + p(kRoot / "ds.csv")).code == 0);
  CHECK(slurp(kRoot / "ds.csv").find("\nattention,") != std::string::npos);

  REQUIRE(cli("export-attention --checkpoint " + ckpt + " --image " + p(image) + " --trimap " +
              p(kRoot / "ones.png") + " --out " + p(kRoot / "att"))
              .code == 0);
  for (int s = 0; s < 3; ++s) {
    const Image enc = read_image(kRoot / "att" / ("enc_stage" + std::to_string(s) + ".png"));
    const Image dec = read_image(kRoot / "att" / ("dec_stage" + std::to_string(s) + ".png"));
    CHECK(enc.height() == (48u >> s));
    CHECK(dec.shape() == enc.shape());
  }
  REQUIRE(cli("train --data " + p(d) + " --epochs 1 --crop 32 --quiet --ablation no_attention --out " +
              p(kRoot / "base"))
              .code == 0);
  CHECK(cli("export-attention --checkpoint " + p(kRoot / "base" / "final.ckpt") + " --image " + p(image) +
            " --trimap " + p(kRoot / "ones.png") + " --out " + p(kRoot / "att2"))
            .code == 2);
}

TEST_CASE_FIXTURE(Fixture, "gradcheck on the default configuration") {
  const Run r = cli("gradcheck --out " + p(kRoot / "gc.csv"));
  CHECK(r.code == 0);
  const std::string csv = slurp(kRoot / "gc.csv");
  for (const char* op : {"conv2d", "group_norm", "relu", "sigmoid", "window_softmax", "attention_block",
                         "guided_pool", "guided_unpool", "matting_forward", "alpha_loss", "comp_loss"})
    CHECK(csv.find(std::string("\n") + op + ",") != std::string::npos);
  CHECK(csv.find(",no\n") == std::string::npos);
  // An absurd tolerance makes the numeric-failure exit observable.
  std::ofstream(kRoot / "strict.json") << R"({"tolerance": 1e-30, "seeds": 1})";
  CHECK(cli("gradcheck --config " + p(kRoot / "strict.json")).code == 3);
}
