#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "matte/data.hpp"
#include "matte/losses.hpp"
#include "matte/metrics.hpp"
#include "matte/net.hpp"

namespace matte {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 4;
  std::size_t epochs = 50;
  double gamma = 0.5;
  std::uint64_t seed = 0;
  /// Random crop side; 0 trains on whole samples.
  std::size_t crop = 64;
  bool augment = true;
  /// Keep group-norm affine parameters at their initial values.
  bool freeze_norm = false;
  NetConfig net;  // net.attention selects the ablation variant

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct AdamState {
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update. `grads` follows params.tensors() order;
/// tensors listed in `frozen` are left untouched.
void adam_step(NetParams<float>& params, const std::vector<Tensor<float>>& grads, AdamState& state,
               const TrainConfig& cfg, const std::vector<const Tensor<float>*>& frozen = {});

struct LossValues {
  double total = 0.0;
  double alpha = 0.0;
  double comp = 0.0;
};

/// Forward + backward on one sample. The loss compares the trimap-fused matte
/// with the ground truth over the whole image.
LossValues loss_and_grad(const NetParams<float>& params, const Sample& sample,
                         const LossConfig& loss_cfg, std::vector<Tensor<float>>* grads);

struct StepLog {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  LossValues loss;
};

struct TrainResult {
  NetParams<float> params;
  NetParams<float> best_params;
  std::vector<StepLog> steps;
  std::vector<double> epoch_loss;  // mean total loss per epoch
  std::size_t best_epoch = 0;
  std::uint64_t step_count = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Trains on in-memory samples.
TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& samples,
                  const EpochCallback& on_epoch = {});

/// Trains on the train split of a dataset directory and writes
/// final.ckpt, best.ckpt, loss.csv and config.json into out_dir.
TrainResult train(const TrainConfig& cfg, const std::filesystem::path& data_root,
                  const std::filesystem::path& out_dir, const EpochCallback& on_epoch = {});

std::string loss_log_csv(const std::vector<StepLog>& steps);

/// Resize-capped inference: the image is downscaled when its longer edge
/// exceeds max_edge, the raw alpha is scaled back and fused with the trimap.
Image predict_matte(const NetParams<float>& params, const Image& rgb, const Image& trimap,
                    std::size_t max_edge = 1500);

/// Raw network alpha (before fusion) at the input resolution.
Image predict_raw_alpha(const NetParams<float>& params, const Image& rgb, const Image& trimap);

struct DatasetEvaluation {
  MetricsReport mean;
  std::size_t samples = 0;
  std::size_t skipped = 0;
};

DatasetEvaluation evaluate_samples(const NetParams<float>& params, const std::vector<Sample>& samples);
DatasetEvaluation evaluate_dataset(const NetParams<float>& params, const std::filesystem::path& data_root,
                                   const std::string& split);

}  // namespace matte
