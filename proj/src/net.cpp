#include "matte/net.hpp"

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "matte/image_io.hpp"

namespace matte {

namespace {

constexpr ConvGeometry k3x3{3, 3, 1, 1, 1};
constexpr ConvGeometry k1x1{1, 1, 1, 0, 1};
constexpr char kMagic[8] = {'M', 'A', 'T', 'T', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

template <typename T>
Var apply_conv_relu(Graph<T>& g, ParamBinder<T>& bind, Var x, const ConvSpec<T>& spec) {
  return relu(g, conv2d(g, x, bind(spec.weight), bind(spec.bias), spec.geo));
}

template <typename Self, typename Out>
void collect_tensors(Self& self, Out& out) {
  auto add_conv = [&](const std::string& name, auto& spec) {
    out.emplace_back(name + ".w", &spec.weight);
    out.emplace_back(name + ".b", &spec.bias);
  };
  for (std::size_t s = 0; s < self.encoder.size(); ++s) {
    auto& st = self.encoder[s];
    const std::string p = "enc" + std::to_string(s);
    for (std::size_t i = 0; i < st.convs.size(); ++i) add_conv(p + ".conv" + std::to_string(i), st.convs[i]);
    for (auto& att : st.attention) {
      for (std::size_t m = 0; m < att.branches.size(); ++m) {
        auto& b = att.branches[m];
        const std::string bp = p + ".attn.branch" + std::to_string(m);
        add_conv(bp + ".group_conv", b.group_conv);
        out.emplace_back(bp + ".norm.gamma", &b.norm_gamma);
        out.emplace_back(bp + ".norm.beta", &b.norm_beta);
        add_conv(bp + ".pw_reduce", b.pointwise_reduce);
        add_conv(bp + ".pw_out", b.pointwise_out);
      }
    }
  }
  for (std::size_t i = 0; i < self.bottleneck.size(); ++i) add_conv("mid.conv" + std::to_string(i), self.bottleneck[i]);
  for (std::size_t s = self.decoder.size(); s-- > 0;) {
    auto& st = self.decoder[s];
    for (std::size_t i = 0; i < st.convs.size(); ++i) {
      add_conv("dec" + std::to_string(s) + ".conv" + std::to_string(i), st.convs[i]);
    }
  }
  add_conv("head", self.head);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_uint(std::istream& in, int bytes, const std::string& path) {
  unsigned char b[8] = {};
  in.read(reinterpret_cast<char*>(b), bytes);
  if (!in) throw DataError(path + ": truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void NetConfig::validate() const {
  if (stages < 1) throw std::invalid_argument("net config: stages must be >= 1");
  if (base_channels == 0 || base_channels % 2 != 0) {
    throw std::invalid_argument("net config: base_channels must be positive and even");
  }
  if (convs_per_stage < 1) throw std::invalid_argument("net config: convs_per_stage must be >= 1");
  if (attention_reduction == 0 || base_channels % attention_reduction != 0) {
    throw std::invalid_argument("net config: attention_reduction must divide base_channels");
  }
  if (norm_groups == 0 || (2 * base_channels) % norm_groups != 0) {
    throw std::invalid_argument("net config: norm_groups must divide 2 * base_channels");
  }
}

void to_json(nlohmann::json& j, const NetConfig& c) {
  j = nlohmann::json{{"stages", c.stages},
                     {"base_channels", c.base_channels},
                     {"convs_per_stage", c.convs_per_stage},
                     {"seed", c.seed},
                     {"attention", c.attention},
                     {"skip_connections", c.skip_connections},
                     {"attention_reduction", c.attention_reduction},
                     {"norm_groups", c.norm_groups}};
}

void from_json(const nlohmann::json& j, NetConfig& c) {
  NetConfig d;
  c.stages = j.value("stages", d.stages);
  c.base_channels = j.value("base_channels", d.base_channels);
  c.convs_per_stage = j.value("convs_per_stage", d.convs_per_stage);
  c.seed = j.value("seed", d.seed);
  c.attention = j.value("attention", d.attention);
  c.skip_connections = j.value("skip_connections", d.skip_connections);
  c.attention_reduction = j.value("attention_reduction", d.attention_reduction);
  c.norm_groups = j.value("norm_groups", d.norm_groups);
}

template <typename T>
NetParams<T> NetParams<T>::zeros(const NetConfig& cfg) {
  cfg.validate();
  NetParams p;
  p.config = cfg;
  std::size_t in = 4;
  for (std::size_t s = 0; s < cfg.stages; ++s) {
    const std::size_t c = cfg.channels_at(s);
    EncoderStage st;
    for (std::size_t i = 0; i < cfg.convs_per_stage; ++i) {
      st.convs.push_back(ConvSpec<T>::zeros(i == 0 ? in : c, c, k3x3));
    }
    if (cfg.attention) {
      st.attention.push_back(
          AttentionBlockParams<T>::zeros(c, c / cfg.attention_reduction, cfg.norm_groups));
    }
    p.encoder.push_back(std::move(st));
    in = c;
  }
  const std::size_t mid = cfg.channels_at(cfg.stages - 1);
  for (std::size_t i = 0; i < cfg.convs_per_stage; ++i) p.bottleneck.push_back(ConvSpec<T>::zeros(mid, mid, k3x3));
  p.decoder.resize(cfg.stages);
  std::size_t carried = mid;
  for (std::size_t s = cfg.stages; s-- > 0;) {
    const std::size_t c = cfg.channels_at(s);
    const std::size_t first_in = carried + (cfg.skip_connections ? c : 0);
    for (std::size_t i = 0; i < cfg.convs_per_stage; ++i) {
      p.decoder[s].convs.push_back(ConvSpec<T>::zeros(i == 0 ? first_in : c, c, k3x3));
    }
    carried = c;
  }
  p.head = ConvSpec<T>::zeros(carried, 1, k1x1);
  return p;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> NetParams<T>::tensors() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  collect_tensors(*this, out);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> NetParams<T>::tensors() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  collect_tensors(*this, out);
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> NetParams<T>::norm_tensors() const {
  std::vector<const Tensor<T>*> out;
  for (const auto& st : encoder) {
    for (const auto& att : st.attention) {
      for (const auto& b : att.branches) {
        out.push_back(&b.norm_gamma);
        out.push_back(&b.norm_beta);
      }
    }
  }
  return out;
}

template <typename T>
std::size_t NetParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors()) n += t->size();
  return n;
}

template <typename T>
NetParams<T> init_params(const NetConfig& cfg) {
  NetParams<T> p = NetParams<T>::zeros(cfg);
  std::mt19937_64 rng(cfg.seed);
  for (auto& st : p.encoder) {
    for (auto& conv : st.convs) he_init(conv, rng);
    for (auto& att : st.attention) he_init(att, rng);
  }
  for (auto& conv : p.bottleneck) he_init(conv, rng);
  for (std::size_t s = p.decoder.size(); s-- > 0;) {
    for (auto& conv : p.decoder[s].convs) he_init(conv, rng);
  }
  he_init(p.head, rng);
  return p;
}

template <typename T>
ForwardTrace<T> forward(Graph<T>& g, ParamBinder<T>& bind, Var input, const NetParams<T>& params) {
  const NetConfig& cfg = params.config;
  const Shape in = g.value(input).shape();
  if (in.c != 4) {
    throw ShapeError("forward: expected 4 input channels (RGB + trimap), got " + in.str());
  }
  if (in.h == 0 || in.w == 0) throw ShapeError("forward: empty input");
  const std::size_t m = cfg.spatial_multiple();
  // Centre every input channel on zero: [0, 1] -> [-1, 1]. With all-positive
  // inputs a He-initialised first layer leaves many channels dead.
  Var x = pad_to(g, input, round_up(in.h, m), round_up(in.w, m));
  x = affine(g, x, T(2), T(-1));

  ForwardTrace<T> trace;
  std::vector<Var> skips;
  std::vector<Shape> sizes;
  for (std::size_t s = 0; s < cfg.stages; ++s) {
    const auto& st = params.encoder[s];
    for (const auto& conv : st.convs) x = apply_conv_relu(g, bind, x, conv);
    skips.push_back(x);
    const Shape sz = g.value(x).shape();
    sizes.push_back(sz);
    x = pad_to(g, x, round_up(sz.h, 2), round_up(sz.w, 2));
    if (!st.attention.empty()) {
      const Var raw = attention_block_forward(g, bind, x, st.attention.front());
      const Var enc = normalize_encoder(g, raw);
      trace.enc_maps.push_back(enc);
      trace.dec_maps.push_back(normalize_decoder(g, raw));
      x = guided_pool(g, x, enc);
    } else {
      x = scale(g, sum_pool(g, x, 2, 2), T(0.25));
    }
  }
  for (const auto& conv : params.bottleneck) x = apply_conv_relu(g, bind, x, conv);
  for (std::size_t s = cfg.stages; s-- > 0;) {
    x = cfg.attention ? guided_unpool(g, x, trace.dec_maps[s]) : nearest_upsample(g, x, 2);
    x = crop_to(g, x, sizes[s].h, sizes[s].w);
    if (cfg.skip_connections) x = concat_channels(g, x, skips[s]);
    for (const auto& conv : params.decoder[s].convs) x = apply_conv_relu(g, bind, x, conv);
  }
  x = conv2d(g, x, bind(params.head.weight), bind(params.head.bias), params.head.geo);
  x = sigmoid(g, x);
  trace.raw_alpha = crop_to(g, x, in.h, in.w);
  return trace;
}

template <typename T>
Tensor<T> forward(const Tensor<T>& input, const NetParams<T>& params) {
  Graph<T> g;
  ParamBinder<T> bind(g, false);
  return g.value(forward(g, bind, g.leaf(input, false), params).raw_alpha);
}

AttentionMaps attention_maps(const Image& input, const NetParams<float>& params) {
  Graph<float> g;
  ParamBinder<float> bind(g, false);
  const auto trace = forward(g, bind, g.leaf(input.cast<float>(), false), params);
  AttentionMaps maps;
  for (const Var v : trace.enc_maps) maps.enc.push_back(g.value(v).cast<double>());
  for (const Var v : trace.dec_maps) maps.dec.push_back(g.value(v).cast<double>());
  return maps;
}

template <typename T>
Tensor<T> make_input(const Image& rgb, const Image& trimap) {
  if (rgb.channels() != 3) throw ShapeError("make_input: expected RGB image, got " + rgb.shape().str());
  if (trimap.channels() != 1 || trimap.height() != rgb.height() || trimap.width() != rgb.width()) {
    throw ShapeError("make_input: trimap " + trimap.shape().str() + " does not match image " +
                     rgb.shape().str());
  }
  Tensor<T> x(rgb.height(), rgb.width(), 4);
  for (std::size_t i = 0; i < trimap.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) x[i * 4 + c] = static_cast<T>(rgb[i * 3 + c]);
    x[i * 4 + 3] = static_cast<T>(trimap[i]);
  }
  return x;
}

Image fuse_with_trimap(const Image& raw_alpha, const Image& trimap) {
  require_same_shape(raw_alpha.shape(), trimap.shape(), "fuse_with_trimap");
  Image out = raw_alpha;
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (trimap_level(trimap[i])) {
      case TrimapLevel::background: out[i] = 0.0; break;
      case TrimapLevel::foreground: out[i] = 1.0; break;
      case TrimapLevel::unknown: break;
    }
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NetParams<float>& params,
                     std::uint64_t step) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kCheckpointVersion);
  const std::string cfg = nlohmann::json(params.config).dump();
  write_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_u64(out, step);
  const auto named = params.tensors();
  write_u32(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(t->height()));
    write_u32(out, static_cast<std::uint32_t>(t->width()));
    write_u32(out, static_cast<std::uint32_t>(t->channels()));
    for (const float v : t->data()) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, &v, sizeof(bits));
      write_u32(out, bits);
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot write checkpoint " + path.string());
    const std::string bytes = out.str();
    file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string p = path.string();
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError(p + ": not a checkpoint");
  const auto version = read_uint(in, 4, p);
  if (version != kCheckpointVersion) throw DataError(p + ": unsupported checkpoint version " + std::to_string(version));
  std::string cfg(read_uint(in, 4, p), '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  if (!in) throw DataError(p + ": truncated checkpoint");
  Checkpoint ck;
  ck.params = NetParams<float>::zeros(nlohmann::json::parse(cfg).get<NetConfig>());
  ck.step = read_uint(in, 8, p);
  auto named = ck.params.tensors();
  if (read_uint(in, 4, p) != named.size()) throw DataError(p + ": parameter count does not match config");
  for (auto& [name, t] : named) {
    std::string stored(read_uint(in, 4, p), '\0');
    in.read(stored.data(), static_cast<std::streamsize>(stored.size()));
    const Shape shape{read_uint(in, 4, p), read_uint(in, 4, p), read_uint(in, 4, p)};
    if (stored != name || !(shape == t->shape())) {
      throw DataError(p + ": unexpected tensor " + stored + " " + shape.str() + ", wanted " + name +
                      " " + t->shape().str());
    }
    for (auto& v : t->vec()) {
      const auto bits = static_cast<std::uint32_t>(read_uint(in, 4, p));
      std::memcpy(&v, &bits, sizeof(v));
    }
  }
  return ck;
}

#define MATTE_INSTANTIATE_NET(T)                                                             \
  template struct NetParams<T>;                                                              \
  template NetParams<T> init_params(const NetConfig&);                                       \
  template ForwardTrace<T> forward(Graph<T>&, ParamBinder<T>&, Var, const NetParams<T>&);    \
  template Tensor<T> forward(const Tensor<T>&, const NetParams<T>&);                         \
  template Tensor<T> make_input(const Image&, const Image&);

MATTE_INSTANTIATE_NET(float)
MATTE_INSTANTIATE_NET(double)
MATTE_INSTANTIATE_NET(long double)

}  // namespace matte
