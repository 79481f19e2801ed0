// Command-line front end: data generation, trimaps, training, inference,
// evaluation, gradient checks and attention-map export.
//
// Every subcommand accepts --config FILE (JSON). Its keys are the long flag
// names with '-' replaced by '_'; flags given on the command line win. The
// resolved configuration is written next to the outputs.
//
// Exit codes: 0 success, 1 usage, 2 data, 3 numeric check failed.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "matte/data.hpp"
#include "matte/gradcheck_suite.hpp"
#include "matte/image_io.hpp"
#include "matte/metrics.hpp"
#include "matte/net.hpp"
#include "matte/trainer.hpp"
#include "matte/trimap.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace matte;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options of one subcommand, layered as defaults < config file < flags.
class Layered {
 public:
  Layered(CLI::App* app, json defaults) : app_(app), defaults_(std::move(defaults)) {
    app_->add_option("--config", config_, "JSON file with option values; flags override it");
  }

  template <typename V>
  CLI::Option* option(const std::string& flag, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<V>();
    CLI::Option* o = app_->add_option(flag, *value, help);
    setters_.push_back([o, value, pointer](json& j) {
      if (o->count() > 0) j[json::json_pointer(pointer)] = *value;
    });
    return o;
  }

  CLI::Option* flag(const std::string& flag, const std::string& pointer, bool value_when_set,
                    const std::string& help) {
    CLI::Option* o = app_->add_flag(flag, help);
    setters_.push_back([o, pointer, value_when_set](json& j) {
      if (o->count() > 0) j[json::json_pointer(pointer)] = value_when_set;
    });
    return o;
  }

  json resolve() const {
    json j = defaults_;
    if (!config_.empty()) {
      std::ifstream in(config_);
      if (!in) throw DataError("cannot open config " + config_);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::parse_error& e) {
        throw DataError(config_ + ": " + e.what());
      }
      if (!file.is_object()) throw UsageError(config_ + ": config must be a JSON object");
      const json flat_defaults = defaults_.flatten();
      const json flat_file = file.flatten();
      for (const auto& [key, value] : flat_file.items()) {
        if (!flat_defaults.contains(key)) throw UsageError(config_ + ": unknown key " + key);
      }
      j.merge_patch(file);
    }
    for (const auto& set : setters_) set(j);
    const json flat = j.flatten();
    for (const auto& [key, value] : flat.items()) {
      if (value.is_null()) throw UsageError("missing required option " + key.substr(1));
    }
    return j;
  }

 private:
  CLI::App* app_;
  json defaults_;
  std::string config_;
  std::vector<std::function<void(json&)>> setters_;
};

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// Resolved config for a single output file lives beside it.
fs::path sidecar(const fs::path& output) { return fs::path(output.string() + ".config.json"); }

Image single_channel(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.height(), img.width(), 1);
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x) {
      double s = 0.0;
      for (std::size_t c = 0; c < img.channels(); ++c) s += img(y, x, c);
      out(y, x) = s / static_cast<double>(img.channels());
    }
  return out;
}

Image as_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  if (img.channels() != 1) throw ShapeError("expected a gray or RGB image, got " + img.shape().str());
  Image out(img.height(), img.width(), 3);
  for (std::size_t i = 0; i < img.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) out[i * 3 + c] = img[i];
  return out;
}

// Trimap from --trimap, or derived from --mask with the given rate.
Image load_trimap(const json& j) {
  const std::string tri = j.at("trimap").get<std::string>();
  const std::string mask = j.at("mask").get<std::string>();
  if (tri.empty() == mask.empty()) throw UsageError("give exactly one of --trimap and --mask");
  if (!tri.empty()) return read_trimap(tri);
  TrimapConfig cfg;
  cfg.rate = j.at("rate").get<double>();
  cfg.validate();
  return generate_trimap(single_channel(read_image(mask)), cfg);
}

// Image and trimap (or mask) must cover the same pixels.
void check_same_size(const Image& rgb, const Image& trimap, const json& j) {
  if (rgb.height() == trimap.height() && rgb.width() == trimap.width()) return;
  const std::string other = j.at("trimap").get<std::string>().empty() ? j.at("mask").get<std::string>()
                                                                       : j.at("trimap").get<std::string>();
  throw ShapeError(other + " is " + std::to_string(trimap.height()) + "x" + std::to_string(trimap.width()) +
                   " but " + j.at("image").get<std::string>() + " is " + std::to_string(rgb.height()) + "x" +
                   std::to_string(rgb.width()));
}

Checkpoint load_ckpt(const json& j) { return load_checkpoint(j.at("checkpoint").get<std::string>()); }

// ---------------------------------------------------------------------------

int gen_data(const json& j) {
  DatasetOptions o;
  o.count = j.at("count").get<std::size_t>();
  const long test = j.at("test_count").get<long>();
  o.test_count = test >= 0 ? static_cast<std::size_t>(test) : (o.count > 1 ? std::max<std::size_t>(1, o.count / 9) : 0);
  o.master_seed = j.at("seed").get<std::uint64_t>();
  o.sample.size = j.at("size").get<std::size_t>();
  o.sample.trimap.rate = j.at("rate").get<double>();
  o.sample.jitter_trimap = j.at("jitter_trimap").get<bool>();
  const fs::path out = j.at("out").get<std::string>();
  const DatasetManifest m = write_dataset(out, o);
  json resolved = j;
  resolved["test_count"] = o.test_count;
  write_json(out / "gen-data.config.json", resolved);
  std::cout << "wrote " << m.entries.size() << " samples (" << m.split("test").size() << " test) to "
            << out.string() << "\n";
  return 0;
}

int trimap_cmd(const json& j) {
  TrimapConfig cfg;
  cfg.rate = j.at("rate").get<double>();
  cfg.min_radius = j.at("min_radius").get<std::size_t>();
  cfg.validate();
  const Image mask = single_channel(read_image(j.at("mask").get<std::string>()));
  const fs::path out = j.at("out").get<std::string>();
  write_image(out, generate_trimap(mask, cfg));
  write_json(sidecar(out), j);
  return 0;
}

int train_cmd(const json& j) {
  TrainConfig cfg = j.at("train").get<TrainConfig>();
  cfg.validate();
  const fs::path data = j.at("data").get<std::string>();
  const fs::path out = j.at("out").get<std::string>();
  const bool quiet = j.at("quiet").get<bool>();
  const TrainResult r = train(cfg, data, out, [&](std::size_t epoch, double loss) {
    if (!quiet) std::cout << "epoch " << epoch << " loss " << loss << std::endl;
  });
  json resolved = j;
  resolved["train"] = cfg;
  write_json(out / "train.config.json", resolved);
  std::cout << "trained " << r.step_count << " steps, best epoch " << r.best_epoch << "\n";
  return 0;
}

int infer_cmd(const json& j) {
  const Checkpoint ck = load_ckpt(j);
  const Image rgb = as_rgb(read_image(j.at("image").get<std::string>()));
  const Image trimap = load_trimap(j);
  check_same_size(rgb, trimap, j);
  const fs::path out = j.at("out").get<std::string>();
  write_image(out, predict_matte(ck.params, rgb, trimap, j.at("max_edge").get<std::size_t>()));
  write_json(sidecar(out), j);
  return 0;
}

int eval_cmd(const json& j) {
  const std::string pred = j.at("pred").get<std::string>();
  const std::string gt = j.at("gt").get<std::string>();
  const std::string ckpt = j.at("checkpoint").get<std::string>();
  const std::string data = j.at("data").get<std::string>();
  const fs::path out = j.at("out").get<std::string>();
  std::string method = j.at("method").get<std::string>();

  std::vector<MetricsRow> rows;
  if (!pred.empty() || !gt.empty()) {
    if (pred.empty() || gt.empty()) throw UsageError("--pred and --gt go together");
    if (!ckpt.empty() || !data.empty()) throw UsageError("use either --pred/--gt or --checkpoint/--data");
    const Image p = single_channel(read_image(pred));
    const Image g = single_channel(read_image(gt));
    if (p.shape() != g.shape()) {
      throw ShapeError(pred + " is " + p.shape().str() + " but " + gt + " is " + g.shape().str());
    }
    rows.push_back({method.empty() ? "pred" : method, evaluate(p, g), 1, 0});
  } else {
    if (ckpt.empty() || data.empty()) throw UsageError("eval needs --pred/--gt or --checkpoint/--data");
    const Checkpoint ck = load_checkpoint(ckpt);
    if (method.empty()) method = ck.params.config.attention ? "attention" : "no_attention";
    const auto e = evaluate_dataset(ck.params, data, j.at("split").get<std::string>());
    rows.push_back({method, e.mean, e.samples, e.skipped});
  }
  write_metrics_csv(out, rows);
  write_json(sidecar(out), j);
  std::cout << metrics_csv(rows);
  return 0;
}

int gradcheck_cmd(const json& j) {
  GradCheckSuiteOptions o;
  o.seeds = j.at("seeds").get<std::size_t>();
  o.base_seed = j.at("seed").get<std::uint64_t>();
  o.eps = j.at("eps").get<double>();
  if (o.seeds == 0 || !(o.eps > 0.0)) throw UsageError("gradcheck: --seeds and --eps must be positive");
  const double tol = j.at("tolerance").get<double>();
  const auto checks = run_gradcheck_suite(o);

  std::ostringstream csv;
  csv << "operator,max_relative_error,seeds,coordinates,pass\n";
  bool ok = true;
  for (const auto& c : checks) {
    const bool pass = c.max_relative_error <= tol;
    ok = ok && pass;
    csv << c.name << "," << std::scientific << std::setprecision(3) << c.max_relative_error << "," << c.seeds
        << "," << c.coordinates << "," << (pass ? "yes" : "no") << "\n";
  }
  std::cout << csv.str();
  const std::string out = j.at("out").get<std::string>();
  if (!out.empty()) {
    const fs::path p = out;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream(p) << csv.str();
    write_json(sidecar(p), j);
  }
  if (!ok) std::cerr << "gradcheck: relative error above " << tol << "\n";
  return ok ? 0 : kNumeric;
}

Image stretch(const Image& m) {
  const auto [lo, hi] = std::minmax_element(m.vec().begin(), m.vec().end());
  Image out(m.shape());
  const double span = *hi - *lo;
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = span > 0.0 ? (m[i] - *lo) / span : 0.5;
  return out;
}

int export_attention_cmd(const json& j) {
  const Checkpoint ck = load_ckpt(j);
  if (!ck.params.config.attention) throw DataError(j.at("checkpoint").get<std::string>() + ": checkpoint has no attention module");
  const Image rgb = as_rgb(read_image(j.at("image").get<std::string>()));
  const Image trimap = load_trimap(j);
  check_same_size(rgb, trimap, j);
  const AttentionMaps maps = attention_maps(make_input<double>(rgb, trimap), ck.params);
  const fs::path out = j.at("out").get<std::string>();
  const bool raw = j.at("raw").get<bool>();
  for (std::size_t s = 0; s < maps.enc.size(); ++s) {
    write_image(out / ("enc_stage" + std::to_string(s) + ".png"), raw ? maps.enc[s] : stretch(maps.enc[s]));
    write_image(out / ("dec_stage" + std::to_string(s) + ".png"), raw ? maps.dec[s] : stretch(maps.dec[s]));
  }
  write_json(out / "export-attention.config.json", j);
  std::cout << "wrote " << 2 * maps.enc.size() << " maps to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trimap-guided alpha matting with attention-guided pooling"};
  app.require_subcommand(1);

  std::vector<std::pair<CLI::App*, std::function<int()>>> commands;
  auto add = [&](const std::string& name, const std::string& help, json defaults,
                 const std::function<void(Layered&)>& declare, std::function<int(const json&)> run) {
    CLI::App* sub = app.add_subcommand(name, help);
    auto layered = std::make_shared<Layered>(sub, std::move(defaults));
    declare(*layered);
    commands.emplace_back(sub, [layered, run] { return run(layered->resolve()); });
  };

  add("gen-data", "Write a synthetic dataset with a manifest",
      {{"out", nullptr}, {"count", 576}, {"test_count", -1}, {"size", 96}, {"seed", 0}, {"rate", 0.03},
       {"jitter_trimap", false}},
      [](Layered& l) {
        l.option<std::string>("--out", "/out", "Dataset directory");
        l.option<std::size_t>("--count", "/count", "Total number of samples");
        l.option<long>("--test-count", "/test_count", "Samples in the test split (default count/9)");
        l.option<std::size_t>("--size", "/size", "Side length in pixels");
        l.option<std::uint64_t>("--seed", "/seed", "Master seed");
        l.option<double>("--rate", "/rate", "Trimap erosion/dilation rate");
        l.flag("--jitter-trimap", "/jitter_trimap", true, "Perturb trimap radii by up to 1 px");
      },
      gen_data);

  add("trimap", "Derive a trimap from a binary mask",
      {{"mask", nullptr}, {"out", nullptr}, {"rate", 0.03}, {"min_radius", 1}},
      [](Layered& l) {
        l.option<std::string>("--mask", "/mask", "Binary mask image");
        l.option<std::string>("--out", "/out", "Output trimap (0/128/255)");
        l.option<double>("--rate", "/rate", "Radius as a fraction of the mean bounding-box side");
        l.option<std::size_t>("--min-radius", "/min_radius", "Smallest radius in pixels");
      },
      trimap_cmd);

  add("train", "Train on the train split of a dataset",
      {{"data", nullptr}, {"out", nullptr}, {"quiet", false}, {"train", json(TrainConfig{})}},
      [](Layered& l) {
        l.option<std::string>("--data", "/data", "Dataset directory");
        l.option<std::string>("--out", "/out", "Run directory for checkpoints and logs");
        l.option<std::size_t>("--epochs", "/train/epochs", "Training epochs");
        l.option<std::size_t>("--batch-size", "/train/batch_size", "Samples per Adam step");
        l.option<double>("--lr", "/train/lr", "Adam learning rate");
        l.option<double>("--gamma", "/train/gamma", "Weight of the alpha loss");
        l.option<std::size_t>("--crop", "/train/crop", "Random crop side, 0 for whole samples");
        l.option<std::uint64_t>("--seed", "/train/seed", "Shuffle and augmentation seed");
        l.option<std::uint64_t>("--init-seed", "/train/net/seed", "Weight initialisation seed");
        l.option<std::string>("--ablation", "/train/ablation", "attention or no_attention")
            ->check(CLI::IsMember({"attention", "no_attention"}));
        l.option<std::size_t>("--stages", "/train/net/stages", "Encoder/decoder stages");
        l.option<std::size_t>("--base-channels", "/train/net/base_channels", "Channels of the first stage");
        l.flag("--no-augment", "/train/augment", false, "Disable scale/crop/flip augmentation");
        l.flag("--freeze-norm", "/train/freeze_norm", true, "Keep group-norm affine parameters fixed");
        l.flag("--quiet", "/quiet", true, "No per-epoch output");
      },
      train_cmd);

  add("infer", "Predict a matte for one image",
      {{"checkpoint", nullptr}, {"image", nullptr}, {"trimap", ""}, {"mask", ""}, {"rate", 0.03},
       {"out", nullptr}, {"max_edge", 1500}},
      [](Layered& l) {
        l.option<std::string>("--checkpoint", "/checkpoint", "Checkpoint file");
        l.option<std::string>("--image", "/image", "RGB image");
        l.option<std::string>("--trimap", "/trimap", "Trimap image (0/128/255)");
        l.option<std::string>("--mask", "/mask", "Binary mask; the trimap is derived from it");
        l.option<double>("--rate", "/rate", "Trimap rate when --mask is used");
        l.option<std::string>("--out", "/out", "Output matte");
        l.option<std::size_t>("--max-edge", "/max_edge", "Longer-edge cap before inference");
      },
      infer_cmd);

  add("eval", "Matte metrics for a prediction or a checkpoint on a dataset split",
      {{"pred", ""}, {"gt", ""}, {"checkpoint", ""}, {"data", ""}, {"split", "test"}, {"method", ""},
       {"out", nullptr}},
      [](Layered& l) {
        l.option<std::string>("--pred", "/pred", "Predicted matte");
        l.option<std::string>("--gt", "/gt", "Ground-truth matte");
        l.option<std::string>("--checkpoint", "/checkpoint", "Checkpoint to evaluate on --data");
        l.option<std::string>("--data", "/data", "Dataset directory");
        l.option<std::string>("--split", "/split", "Dataset split");
        l.option<std::string>("--method", "/method", "Row label in the CSV");
        l.option<std::string>("--out", "/out", "Metrics CSV");
      },
      eval_cmd);

  add("gradcheck", "Central-difference check of every differentiable operator",
      {{"seeds", 10}, {"seed", 0}, {"eps", 1e-6}, {"tolerance", 1e-4}, {"out", ""}},
      [](Layered& l) {
        l.option<std::size_t>("--seeds", "/seeds", "Random instances per operator");
        l.option<std::uint64_t>("--seed", "/seed", "First seed");
        l.option<double>("--eps", "/eps", "Finite-difference step");
        l.option<std::string>("--out", "/out", "Optional CSV report");
      },
      gradcheck_cmd);

  add("export-attention", "Write per-stage encoder and decoder attention maps",
      {{"checkpoint", nullptr}, {"image", nullptr}, {"trimap", ""}, {"mask", ""}, {"rate", 0.03},
       {"out", nullptr}, {"raw", false}},
      [](Layered& l) {
        l.option<std::string>("--checkpoint", "/checkpoint", "Checkpoint with attention");
        l.option<std::string>("--image", "/image", "RGB image");
        l.option<std::string>("--trimap", "/trimap", "Trimap image");
        l.option<std::string>("--mask", "/mask", "Binary mask; the trimap is derived from it");
        l.option<double>("--rate", "/rate", "Trimap rate when --mask is used");
        l.option<std::string>("--out", "/out", "Output directory");
        l.flag("--raw", "/raw", true, "Write map values as-is instead of stretching each to [0, 1]");
      },
      export_attention_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    for (const auto& [sub, run] : commands)
      if (sub->parsed()) return run();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const EmptyObjectError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const json::exception& e) {
    std::cerr << "error: bad option value: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
