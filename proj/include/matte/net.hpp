#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "matte/attention.hpp"
#include "matte/graph.hpp"

namespace matte {

struct NetConfig {
  std::size_t stages = 3;
  std::size_t base_channels = 16;
  std::size_t convs_per_stage = 2;
  std::uint64_t seed = 0;
  /// false builds the plain average-pool / nearest-upsample baseline.
  bool attention = true;
  bool skip_connections = true;
  /// Width between the two pointwise convolutions, as a divisor of C.
  std::size_t attention_reduction = 2;
  std::size_t norm_groups = 2;

  void validate() const;
  std::size_t channels_at(std::size_t stage) const { return base_channels << stage; }
  /// Spatial multiple every input is padded to.
  std::size_t spatial_multiple() const { return std::size_t{1} << stages; }
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

template <typename T>
struct NetParams {
  struct EncoderStage {
    std::vector<ConvSpec<T>> convs;
    std::vector<AttentionBlockParams<T>> attention;  // empty or exactly one block
  };
  struct DecoderStage {
    std::vector<ConvSpec<T>> convs;
  };

  NetConfig config;
  std::vector<EncoderStage> encoder;
  std::vector<ConvSpec<T>> bottleneck;
  std::vector<DecoderStage> decoder;  // decoder[s] mirrors encoder[s]
  ConvSpec<T> head;

  /// Correctly shaped, all-zero parameters (group-norm gamma 1).
  static NetParams zeros(const NetConfig& cfg);

  /// Every parameter tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor<T>*>> tensors();
  std::vector<std::pair<std::string, const Tensor<T>*>> tensors() const;
  /// Tensors belonging to group-norm affine transforms.
  std::vector<const Tensor<T>*> norm_tensors() const;
  std::size_t parameter_count() const;

  template <typename U>
  NetParams<U> cast() const {
    NetParams<U> out = NetParams<U>::zeros(config);
    auto dst = out.tensors();
    const auto src = tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
    return out;
  }
};

/// He initialisation: weights ~ N(0, 2 / fan_in), biases 0, deterministic in cfg.seed.
template <typename T>
NetParams<T> init_params(const NetConfig& cfg);

template <typename T>
struct ForwardTrace {
  Var raw_alpha;
  std::vector<Var> enc_maps;  // per stage, empty for the baseline
  std::vector<Var> dec_maps;
};

/// input: H x W x 4 (RGB + trimap). Output raw alpha H x W x 1 in (0, 1).
template <typename T>
ForwardTrace<T> forward(Graph<T>& g, ParamBinder<T>& bind, Var input, const NetParams<T>& params);

template <typename T>
Tensor<T> forward(const Tensor<T>& input, const NetParams<T>& params);

/// Per-stage attention maps at each stage's (padded) resolution.
struct AttentionMaps {
  std::vector<Image> enc;
  std::vector<Image> dec;
};
AttentionMaps attention_maps(const Image& input, const NetParams<float>& params);

/// RGB image + trimap -> H x W x 4 network input.
template <typename T>
Tensor<T> make_input(const Image& rgb, const Image& trimap);

/// 1.0 on trimap foreground, 0.0 on background, raw_alpha in the unknown band.
Image fuse_with_trimap(const Image& raw_alpha, const Image& trimap);

struct Checkpoint {
  NetParams<float> params;
  std::uint64_t step = 0;
};

/// Binary container: magic, version, config JSON, step counter, then every
/// named float32 parameter array with its shape.
void save_checkpoint(const std::filesystem::path& path, const NetParams<float>& params,
                     std::uint64_t step);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace matte
