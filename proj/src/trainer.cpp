#include "matte/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "matte/image_io.hpp"

namespace matte {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train config: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("train config: eps must be positive");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  LossConfig{gamma}.validate();
  net.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"eps", c.eps},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"gamma", c.gamma},
                     {"seed", c.seed},
                     {"crop", c.crop},
                     {"augment", c.augment},
                     {"freeze_norm", c.freeze_norm},
                     {"ablation", c.net.attention ? "attention" : "no_attention"},
                     {"net", c.net}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.gamma = j.value("gamma", d.gamma);
  c.seed = j.value("seed", d.seed);
  c.crop = j.value("crop", d.crop);
  c.augment = j.value("augment", d.augment);
  c.freeze_norm = j.value("freeze_norm", d.freeze_norm);
  if (j.contains("net")) c.net = j.at("net").get<NetConfig>();
  if (j.contains("ablation")) {
    const auto a = j.at("ablation").get<std::string>();
    if (a != "attention" && a != "no_attention") {
      throw std::invalid_argument("train config: ablation must be attention or no_attention");
    }
    c.net.attention = a == "attention";
  }
}

void adam_step(NetParams<float>& params, const std::vector<Tensor<float>>& grads, AdamState& state,
               const TrainConfig& cfg, const std::vector<const Tensor<float>*>& frozen) {
  auto named = params.tensors();
  if (grads.size() != named.size()) {
    throw std::invalid_argument("adam_step: expected " + std::to_string(named.size()) +
                                " gradient tensors, got " + std::to_string(grads.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (!(grads[i].shape() == named[i].second->shape())) {
      throw std::invalid_argument("adam_step: missing or misshapen gradient for " + named[i].first);
    }
  }
  if (state.m.empty()) {
    for (const auto& [name, t] : named) {
      state.m.emplace_back(t->shape());
      state.v.emplace_back(t->shape());
    }
  }
  ++state.step;
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor<float>& p = *named[i].second;
    if (std::find(frozen.begin(), frozen.end(), named[i].second) != frozen.end()) continue;
    Tensor<float>& m = state.m[i];
    Tensor<float>& v = state.v[i];
    const Tensor<float>& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      m[k] = static_cast<float>(b1 * m[k] + (1.0 - b1) * gk);
      v[k] = static_cast<float>(b2 * v[k] + (1.0 - b2) * gk * gk);
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] = static_cast<float>(p[k] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

LossValues loss_and_grad(const NetParams<float>& params, const Sample& sample,
                         const LossConfig& loss_cfg, std::vector<Tensor<float>>* grads) {
  Graph<float> g;
  ParamBinder<float> bind(g, grads != nullptr);
  const Var input = g.leaf(make_input<float>(sample.image, sample.trimap), false);
  const auto trace = forward(g, bind, input, params);
  const Tensor<float> trimap = sample.trimap.cast<float>();
  const Var fused = fuse_with_trimap(g, trace.raw_alpha, trimap);
  const auto terms = matting_loss(g, fused, sample.gt_alpha.cast<float>(), sample.gt_fg.cast<float>(),
                                  sample.gt_bg.cast<float>(), sample.image.cast<float>(), loss_cfg);
  LossValues out{g.value(terms.total)[0], g.value(terms.alpha)[0], g.value(terms.comp)[0]};
  if (grads != nullptr) {
    g.backward(terms.total);
    const auto named = params.tensors();
    if (grads->empty()) {
      for (const auto& [name, t] : named) grads->emplace_back(t->shape());
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto v = bind.find(*named[i].second);
      if (!v) continue;
      const Tensor<float> gi = g.grad(*v);
      Tensor<float>& acc = (*grads)[i];
      for (std::size_t k = 0; k < gi.size(); ++k) acc[k] += gi[k];
    }
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& samples, const EpochCallback& on_epoch) {
  cfg.validate();
  if (samples.empty()) throw DataError("train: empty training split");
  const LossConfig loss_cfg{cfg.gamma};
  TrainResult result;
  result.params = init_params<float>(cfg.net);
  result.best_params = result.params;
  std::vector<const Tensor<float>*> frozen;
  if (cfg.freeze_norm) frozen = result.params.norm_tensors();

  AdamState adam;
  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Tensor<float>> grads;
      LossValues batch;
      for (std::size_t k = start; k < end; ++k) {
        const Sample& base = samples[order[k]];
        const std::uint64_t aug_seed = rng();
        const bool crop = cfg.augment && cfg.crop != 0;
        const Sample s = crop ? augment(base, aug_seed, cfg.crop) : base;
        const LossValues l = loss_and_grad(result.params, s, loss_cfg, &grads);
        batch.total += l.total;
        batch.alpha += l.alpha;
        batch.comp += l.comp;
      }
      const auto n = static_cast<double>(end - start);
      for (auto& t : grads) {
        for (auto& v : t.vec()) v = static_cast<float>(v / n);
      }
      batch.total /= n;
      batch.alpha /= n;
      batch.comp /= n;
      if (!std::isfinite(batch.total)) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      }
      adam_step(result.params, grads, adam, cfg, frozen);
      result.steps.push_back({epoch, adam.step, batch});
      epoch_total += batch.total * n;
    }
    const double mean = epoch_total / static_cast<double>(order.size());
    result.epoch_loss.push_back(mean);
    if (mean < best) {
      best = mean;
      result.best_epoch = epoch;
      result.best_params = result.params;
    }
    if (on_epoch) on_epoch(epoch, mean);
  }
  result.step_count = adam.step;
  return result;
}

std::string loss_log_csv(const std::vector<StepLog>& steps) {
  std::ostringstream out;
  out << "epoch,step,total_loss,alpha_loss,comp_loss\n";
  out.precision(9);
  for (const auto& s : steps) {
    out << s.epoch << ',' << s.step << ',' << s.loss.total << ',' << s.loss.alpha << ',' << s.loss.comp << '\n';
  }
  return out.str();
}

TrainResult train(const TrainConfig& cfg, const fs::path& data_root, const fs::path& out_dir,
                  const EpochCallback& on_epoch) {
  const DatasetManifest manifest = read_manifest(data_root);
  const auto entries = manifest.split("train");
  if (entries.empty()) throw DataError("train: dataset " + data_root.string() + " has an empty train split");
  std::vector<Sample> samples;
  samples.reserve(entries.size());
  for (const auto& e : entries) samples.push_back(load_sample(data_root, e));

  fs::create_directories(out_dir);
  {
    std::ofstream cfg_out(out_dir / "config.json");
    cfg_out << nlohmann::json(cfg).dump(2) << '\n';
  }
  TrainResult result = train(cfg, samples, on_epoch);
  save_checkpoint(out_dir / "final.ckpt", result.params, result.step_count);
  save_checkpoint(out_dir / "best.ckpt", result.best_params, result.step_count);
  std::ofstream log(out_dir / "loss.csv");
  log << loss_log_csv(result.steps);
  if (!log) throw DataError("cannot write " + (out_dir / "loss.csv").string());
  return result;
}

Image predict_raw_alpha(const NetParams<float>& params, const Image& rgb, const Image& trimap) {
  return forward(make_input<float>(rgb, trimap), params).cast<double>();
}

Image predict_matte(const NetParams<float>& params, const Image& rgb, const Image& trimap,
                    std::size_t max_edge) {
  if (trimap.channels() != 1 || trimap.height() != rgb.height() || trimap.width() != rgb.width()) {
    throw ShapeError("predict: trimap " + trimap.shape().str() + " does not match image " + rgb.shape().str());
  }
  auto [small, scale] = resize_cap(rgb, max_edge);
  Image raw;
  if (scale == 1.0) {
    raw = predict_raw_alpha(params, rgb, trimap);
  } else {
    const Image small_trimap = resize_nearest(trimap, small.height(), small.width());
    raw = resize_bilinear(predict_raw_alpha(params, small, small_trimap), rgb.height(), rgb.width());
  }
  return fuse_with_trimap(raw, trimap);
}

DatasetEvaluation evaluate_samples(const NetParams<float>& params, const std::vector<Sample>& samples) {
  DatasetEvaluation ev;
  for (const Sample& s : samples) {
    MetricsReport r;
    try {
      r = evaluate(predict_matte(params, s.image, s.trimap), s.gt_alpha);
    } catch (const ShapeError& ex) {
      std::cerr << "warning: skipping sample " << s.id << ": " << ex.what() << '\n';
      ++ev.skipped;
      continue;
    }
    ev.mean.mse += r.mse;
    ev.mean.sad += r.sad;
    ev.mean.grad += r.grad;
    ev.mean.conn += r.conn;
    ev.mean.pixels += r.pixels;
    ++ev.samples;
  }
  if (ev.samples > 0) {
    const auto n = static_cast<double>(ev.samples);
    ev.mean.mse /= n;
    ev.mean.sad /= n;
    ev.mean.grad /= n;
    ev.mean.conn /= n;
  }
  return ev;
}

DatasetEvaluation evaluate_dataset(const NetParams<float>& params, const fs::path& data_root,
                                   const std::string& split) {
  const DatasetManifest manifest = read_manifest(data_root);
  const auto entries = manifest.split(split);
  if (entries.empty()) throw DataError("evaluate: split '" + split + "' is empty in " + data_root.string());
  std::vector<Sample> samples;
  std::size_t unreadable = 0;
  for (const auto& e : entries) {
    try {
      samples.push_back(load_sample(data_root, e));
    } catch (const DataError& ex) {
      const std::string what = ex.what();
      if (what.find("dimensions disagree") == std::string::npos) throw;
      std::cerr << "warning: " << what << '\n';
      ++unreadable;
    }
  }
  DatasetEvaluation ev = evaluate_samples(params, samples);
  ev.skipped += unreadable;
  return ev;
}

}  // namespace matte
