#include "lwdepth/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "layers.hpp"
#include "lwdepth/error.hpp"
#include "lwdepth/json_util.hpp"
#include "lwdepth/rng.hpp"

namespace lwdepth {

// --- configuration ------------------------------------------------------------

std::string to_string(OutputActivation a) {
  switch (a) {
    case OutputActivation::kRelu:
      return "relu";
    case OutputActivation::kSoftplus:
      return "softplus";
    case OutputActivation::kNone:
      return "none";
  }
  return "relu";
}

OutputActivation output_activation_from_string(const std::string& s) {
  if (s == "relu") return OutputActivation::kRelu;
  if (s == "softplus") return OutputActivation::kSoftplus;
  if (s == "none") return OutputActivation::kNone;
  throw ConfigError("unknown output activation '" + s + "'");
}

void to_json(nlohmann::json& j, const BackboneSpec& s) {
  j = {{"name", s.name},
       {"channels", s.channels},
       {"factors", s.factors},
       {"convs_per_stage", s.convs_per_stage}};
}

void from_json(const nlohmann::json& j, BackboneSpec& s) {
  require_known_keys(j, {"name", "channels", "factors", "convs_per_stage"}, "backbone");
  s.name = j.value("name", s.name);
  s.channels = j.value("channels", s.channels);
  s.factors = j.value("factors", s.factors);
  s.convs_per_stage = j.value("convs_per_stage", s.convs_per_stage);
}

void to_json(nlohmann::json& j, const FusionDecoderSpec& s) {
  j = {{"compress_channels", s.compress_channels},
       {"compress_kernel", s.compress_kernel},
       {"attention_reduction", s.attention_reduction},
       {"head_kernel", s.head_kernel},
       {"head_hidden_channels", s.head_hidden_channels}};
}

void from_json(const nlohmann::json& j, FusionDecoderSpec& s) {
  require_known_keys(j,
                     {"compress_channels", "compress_kernel", "attention_reduction",
                      "head_kernel", "head_hidden_channels"},
                     "decoder");
  s.compress_channels = j.value("compress_channels", s.compress_channels);
  s.compress_kernel = j.value("compress_kernel", s.compress_kernel);
  s.attention_reduction = j.value("attention_reduction", s.attention_reduction);
  s.head_kernel = j.value("head_kernel", s.head_kernel);
  s.head_hidden_channels = j.value("head_hidden_channels", s.head_hidden_channels);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"backbone", c.backbone},
       {"decoder", c.decoder},
       {"output_activation", to_string(c.output_activation)},
       {"input_channels", c.input_channels},
       {"output_bias_init", c.output_bias_init},
       {"relu_bias_init", c.relu_bias_init},
       {"output_weight_scale", c.output_weight_scale}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  require_known_keys(j,
                     {"backbone", "decoder", "output_activation", "input_channels",
                      "output_bias_init", "relu_bias_init", "output_weight_scale"},
                     "model config");
  if (j.contains("backbone")) j.at("backbone").get_to(c.backbone);
  if (j.contains("decoder")) j.at("decoder").get_to(c.decoder);
  if (j.contains("output_activation")) {
    c.output_activation =
        output_activation_from_string(j.at("output_activation").get<std::string>());
  }
  c.input_channels = j.value("input_channels", c.input_channels);
  c.output_bias_init = j.value("output_bias_init", c.output_bias_init);
  c.relu_bias_init = j.value("relu_bias_init", c.relu_bias_init);
  c.output_weight_scale = j.value("output_weight_scale", c.output_weight_scale);
}

void validate(const ModelConfig& cfg) {
  const auto& b = cfg.backbone;
  if (b.channels.size() != kNumScales || b.factors.size() != kNumScales) {
    throw ConfigError("backbone must describe exactly 5 scales");
  }
  for (int s = 0; s < kNumScales; ++s) {
    if (b.channels[s] < 1) throw ConfigError("backbone channels must be >= 1");
    if (b.factors[s] != (2 << s)) {
      throw ConfigError("backbone factors must be 2, 4, 8, 16, 32");
    }
  }
  if (b.convs_per_stage < 1) throw ConfigError("convs_per_stage must be >= 1");
  const auto& d = cfg.decoder;
  if (d.compress_channels < 1) throw ConfigError("compress_channels must be >= 1");
  if (d.compress_kernel < 1 || d.compress_kernel % 2 == 0) {
    throw ConfigError("compress_kernel must be odd");
  }
  if (d.attention_reduction < 1) throw ConfigError("attention_reduction must be >= 1");
  if (d.head_kernel != 5) throw ConfigError("head_kernel must be 5");
  if (d.head_hidden_channels < 1) throw ConfigError("head_hidden_channels must be >= 1");
  if (cfg.input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (!std::isfinite(cfg.output_bias_init) || !std::isfinite(cfg.relu_bias_init)) {
    throw ConfigError("bias initializers must be finite");
  }
  if (!(cfg.output_weight_scale >= 0.0 && std::isfinite(cfg.output_weight_scale))) {
    throw ConfigError("output_weight_scale must be finite and >= 0");
  }
}

BackboneSpec mobilenet_v2_channels() {
  return {"mobilenet_v2", {16, 24, 32, 96, 320}, {2, 4, 8, 16, 32}, 1};
}

BackboneSpec resnet34_channels() {
  return {"resnet34", {64, 64, 128, 256, 512}, {2, 4, 8, 16, 32}, 1};
}

int attention_hidden(int channels, int reduction) {
  return (channels + reduction - 1) / reduction;
}

int concat_channels(const ModelConfig& cfg) {
  return kNumScales * cfg.decoder.compress_channels;
}

namespace {
std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) {
  return out * in * k * k + out;
}
}  // namespace

std::size_t count_encoder_parameters(const ModelConfig& cfg) {
  validate(cfg);
  const auto& b = cfg.backbone;
  std::size_t n = 0;
  std::size_t in = static_cast<std::size_t>(cfg.input_channels);
  for (int s = 0; s < kNumScales; ++s) {
    const auto c = static_cast<std::size_t>(b.channels[s]);
    n += conv_params(in, c, 3);
    n += static_cast<std::size_t>(b.convs_per_stage - 1) * conv_params(c, c, 3);
    in = c;
  }
  return n;
}

std::size_t count_decoder_parameters(const ModelConfig& cfg) {
  validate(cfg);
  const auto& d = cfg.decoder;
  std::size_t n = 0;
  for (int s = 0; s < kNumScales; ++s) {
    const auto c = static_cast<std::size_t>(cfg.backbone.channels[s]);
    const auto h = static_cast<std::size_t>(attention_hidden(cfg.backbone.channels[s],
                                                             d.attention_reduction));
    n += 2 * c * h + h + c;
    n += conv_params(c, static_cast<std::size_t>(d.compress_channels),
                     static_cast<std::size_t>(d.compress_kernel));
  }
  n += conv_params(static_cast<std::size_t>(concat_channels(cfg)),
                   static_cast<std::size_t>(d.head_hidden_channels),
                   static_cast<std::size_t>(d.head_kernel));
  n += conv_params(static_cast<std::size_t>(d.head_hidden_channels), 1,
                   static_cast<std::size_t>(d.head_kernel));
  return n;
}

std::size_t count_parameters(const ModelConfig& cfg) {
  return count_encoder_parameters(cfg) + count_decoder_parameters(cfg);
}

std::uint64_t encoder_seed(std::uint64_t model_seed) {
  return derive_seed(model_seed, 0xe4c0);
}

// --- DepthNet -------------------------------------------------------------------

template <typename T>
std::size_t DepthNet<T>::add_param(const std::string& name, std::vector<int> shape,
                                   std::size_t fan_in) {
  std::size_t size = 1;
  for (int d : shape) size *= static_cast<std::size_t>(d);
  ParamInfo p{name, std::move(shape), params_.size(), size, fan_in};
  params_.resize(params_.size() + size, T{0});
  info_.push_back(std::move(p));
  return info_.back().offset;
}

template <typename T>
ConvLayer DepthNet<T>::add_conv(const std::string& name, int in, int out, int k,
                                int stride) {
  ConvLayer c;
  c.in = in;
  c.out = out;
  c.kernel = k;
  c.stride = stride;
  c.pad = k / 2;
  const auto fan_in = static_cast<std::size_t>(in) * k * k;
  c.weight = add_param(name + ".weight", {out, in, k, k}, fan_in);
  c.bias = add_param(name + ".bias", {out}, 0);
  return c;
}

namespace {

// He-normal weights, zero biases. Tensor p draws from its own stream.
template <typename T>
void init_tensor(std::span<T> values, std::size_t fan_in, double gain,
                 std::uint64_t stream_seed) {
  if (fan_in == 0) {
    std::fill(values.begin(), values.end(), T{0});
    return;
  }
  Rng rng(stream_seed);
  const double std = std::sqrt(gain / static_cast<double>(fan_in));
  for (auto& v : values) v = static_cast<T>(std * rng.normal());
}

bool is_encoder(const std::string& name) { return name.rfind("encoder.", 0) == 0; }

}  // namespace

template <typename T>
DepthNet<T> DepthNet<T>::create(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  DepthNet net;
  net.cfg_ = cfg;
  const auto& b = cfg.backbone;
  const auto& d = cfg.decoder;
  int in = cfg.input_channels;
  for (int s = 0; s < kNumScales; ++s) {
    const int c = b.channels[s];
    for (int j = 0; j < b.convs_per_stage; ++j) {
      const std::string name =
          "encoder.s" + std::to_string(s) + ".conv" + std::to_string(j);
      net.encoder_.push_back(net.add_conv(name, j == 0 ? in : c, c, 3, j == 0 ? 2 : 1));
    }
    in = c;
  }
  for (int s = 0; s < kNumScales; ++s) {
    const int c = b.channels[s];
    const std::string pre = "decoder.scale" + std::to_string(s);
    AttentionLayer a;
    a.channels = c;
    a.hidden = attention_hidden(c, d.attention_reduction);
    a.w1 = net.add_param(pre + ".attention.fc1.weight", {a.hidden, c},
                         static_cast<std::size_t>(c));
    a.b1 = net.add_param(pre + ".attention.fc1.bias", {a.hidden}, 0);
    a.w2 = net.add_param(pre + ".attention.fc2.weight", {c, a.hidden},
                         static_cast<std::size_t>(a.hidden));
    a.b2 = net.add_param(pre + ".attention.fc2.bias", {c}, 0);
    net.attention_.push_back(a);
    net.compress_.push_back(
        net.add_conv(pre + ".compress", c, d.compress_channels, d.compress_kernel, 1));
  }
  net.head1_ = net.add_conv("decoder.head1", concat_channels(cfg), d.head_hidden_channels,
                            d.head_kernel, 1);
  net.head2_ = net.add_conv("decoder.head2", d.head_hidden_channels, 1, d.head_kernel, 1);

  const std::uint64_t enc_seed = encoder_seed(seed);
  const std::uint64_t dec_seed = derive_seed(seed, 0xdec0);
  std::uint64_t enc_index = 0, dec_index = 0;
  for (const auto& p : net.info_) {
    std::span<T> values(net.params_.data() + p.offset, p.size);
    const bool linear_out = p.name.find("fc2.weight") != std::string::npos ||
                            p.name == "decoder.head2.weight" ||
                            p.name.find(".compress.weight") != std::string::npos;
    const double gain = linear_out ? 1.0 : 2.0;
    if (is_encoder(p.name)) {
      init_tensor(values, p.fan_in, gain, derive_seed(enc_seed, enc_index++));
    } else {
      init_tensor(values, p.fan_in, gain, derive_seed(dec_seed, dec_index++));
    }
  }
  net.params_[net.head2_.bias] = static_cast<T>(cfg.output_bias_init);
  for (std::size_t li = 0; li < net.encoder_.size(); ++li) {
    std::fill_n(net.params_.data() + net.encoder_[li].bias, net.encoder_[li].out,
                static_cast<T>(cfg.relu_bias_init));
  }
  std::fill_n(net.params_.data() + net.head1_.bias, net.head1_.out,
              static_cast<T>(cfg.relu_bias_init));
  {
    const std::size_t n = static_cast<std::size_t>(net.head2_.in) * d.head_kernel * d.head_kernel;
    for (std::size_t i = 0; i < n; ++i) {
      net.params_[net.head2_.weight + i] *= static_cast<T>(cfg.output_weight_scale);
    }
  }
  net.grads_.assign(net.params_.size(), T{0});
  return net;
}

template <typename T>
void DepthNet<T>::assign_layout(const ModelConfig& cfg, const std::vector<ParamInfo>& info,
                                const std::vector<ConvLayer>& encoder,
                                const std::vector<AttentionLayer>& attention,
                                const std::vector<ConvLayer>& compress,
                                const ConvLayer& head1, const ConvLayer& head2) {
  cfg_ = cfg;
  info_ = info;
  encoder_ = encoder;
  attention_ = attention;
  compress_ = compress;
  head1_ = head1;
  head2_ = head2;
  std::size_t total = 0;
  for (const auto& p : info_) total += p.size;
  params_.assign(total, T{0});
  grads_.assign(total, T{0});
}

template <typename T>
void DepthNet<T>::zero_grad() {
  std::fill(grads_.begin(), grads_.end(), T{0});
}

template <typename T>
Tensor<T> DepthNet<T>::forward(const Tensor<T>& rgb) const {
  return run(rgb, nullptr);
}

template <typename T>
Tensor<T> DepthNet<T>::forward(const Tensor<T>& rgb, ForwardTape<T>& tape) const {
  return run(rgb, &tape);
}

namespace {

int round_up(int v, int m) { return (v + m - 1) / m * m; }

// Replicates the last row/column to reach (hp, wp).
template <typename T>
Tensor<T> pad_replicate(const Tensor<T>& x, int hp, int wp) {
  if (x.height() == hp && x.width() == wp) return x;
  Tensor<T> out(x.batch(), x.channels(), hp, wp);
  for (int b = 0; b < x.batch(); ++b) {
    for (int c = 0; c < x.channels(); ++c) {
      for (int y = 0; y < hp; ++y) {
        const int sy = std::min(y, x.height() - 1);
        for (int xx = 0; xx < wp; ++xx) {
          out(b, c, y, xx) = x(b, c, sy, std::min(xx, x.width() - 1));
        }
      }
    }
  }
  return out;
}

template <typename T>
T activate(OutputActivation a, T z) {
  switch (a) {
    case OutputActivation::kRelu:
      return z > T{0} ? z : T{0};
    case OutputActivation::kSoftplus:
      return z > T{20} ? z : std::log1p(std::exp(z));
    case OutputActivation::kNone:
      break;
  }
  return z;
}

template <typename T>
T activate_deriv(OutputActivation a, T z) {
  switch (a) {
    case OutputActivation::kRelu:
      return z > T{0} ? T{1} : T{0};
    case OutputActivation::kSoftplus:
      return layers::sigmoid(z);
    case OutputActivation::kNone:
      break;
  }
  return T{1};
}

}  // namespace

template <typename T>
Tensor<T> DepthNet<T>::run(const Tensor<T>& rgb, ForwardTape<T>* tape) const {
  if (params_.empty()) throw ContractError("model is not initialized");
  if (rgb.channels() != cfg_.input_channels) {
    throw DimensionError("model expects " + std::to_string(cfg_.input_channels) +
                         " input channels, got " + std::to_string(rgb.channels()));
  }
  if (rgb.batch() < 1 || rgb.height() < 1 || rgb.width() < 1) {
    throw DimensionError("empty input batch " + rgb.shape_string());
  }
  for (T v : rgb.span()) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in model input");
  }
  const int out_h = (rgb.height() + 1) / 2;
  const int out_w = (rgb.width() + 1) / 2;
  const int hp = round_up(rgb.height(), 32);
  const int wp = round_up(rgb.width(), 32);
  const T* P = params_.data();
  std::vector<T> local_col, scratch;
  const std::size_t n_enc = encoder_.size();

  Tensor<T> x = pad_replicate(rgb, hp, wp);
  if (tape) {
    // keep the column buffers so repeated passes reuse their allocations
    std::vector<std::vector<T>> cols = std::move(tape->cols);
    *tape = ForwardTape<T>{};
    tape->cols = std::move(cols);
    tape->out_height = out_h;
    tape->out_width = out_w;
    tape->input = x;
    tape->cols.resize(n_enc + kNumScales + 2);
  }
  auto col = [&](std::size_t slot) -> std::vector<T>& {
    return tape ? tape->cols[slot] : local_col;
  };

  std::vector<Tensor<T>> feats;
  const int cps = cfg_.backbone.convs_per_stage;
  for (std::size_t li = 0; li < encoder_.size(); ++li) {
    x = layers::conv_forward(encoder_[li], P, x, col(li), scratch);
    layers::relu_inplace(x);
    if (tape) tape->encoder.push_back(x);
    if (static_cast<int>(li % static_cast<std::size_t>(cps)) == cps - 1) feats.push_back(x);
  }

  const int cc = cfg_.decoder.compress_channels;
  Tensor<T> concat(rgb.batch(), concat_channels(cfg_), hp / 2, wp / 2);
  for (int s = 0; s < kNumScales; ++s) {
    Tensor<T> pooled, hidden, gate;
    Tensor<T> att = layers::attention_forward(attention_[s], P, feats[s], pooled, hidden, gate);
    Tensor<T> comp = layers::conv_forward(compress_[s], P, att, col(n_enc + s), scratch);
    layers::upsample_into(comp, concat, s * cc);
    if (tape) {
      tape->pooled.push_back(std::move(pooled));
      tape->hidden.push_back(std::move(hidden));
      tape->gate.push_back(std::move(gate));
      tape->attended.push_back(std::move(att));
    }
  }

  Tensor<T> h1 = layers::conv_forward(head1_, P, concat, col(n_enc + kNumScales), scratch);
  layers::relu_inplace(h1);
  Tensor<T> z = layers::conv_forward(head2_, P, h1, col(n_enc + kNumScales + 1), scratch);

  Tensor<T> out(rgb.batch(), 1, out_h, out_w);
  for (int b = 0; b < rgb.batch(); ++b) {
    for (int y = 0; y < out_h; ++y) {
      for (int xx = 0; xx < out_w; ++xx) {
        out(b, 0, y, xx) = activate(cfg_.output_activation, z(b, 0, y, xx));
      }
    }
  }
  if (tape) {
    tape->concat = std::move(concat);
    tape->head_hidden = std::move(h1);
    tape->head_out = std::move(z);
  }
  return out;
}

template <typename T>
void DepthNet<T>::backward(const ForwardTape<T>& tape, const Tensor<T>& grad_out) {
  if (tape.head_out.empty()) throw ContractError("backward without a recorded forward");
  if (grad_out.batch() != tape.head_out.batch() || grad_out.channels() != 1 ||
      grad_out.height() != tape.out_height || grad_out.width() != tape.out_width) {
    throw DimensionError("output gradient shape " + grad_out.shape_string() +
                         " does not match the forward pass");
  }
  const T* P = params_.data();
  T* G = grads_.data();
  std::vector<T> scratch, dcol;
  const std::size_t n_enc = encoder_.size();

  const Tensor<T>& z = tape.head_out;
  Tensor<T> dz(z.batch(), 1, z.height(), z.width());
  for (int b = 0; b < z.batch(); ++b) {
    for (int y = 0; y < tape.out_height; ++y) {
      for (int x = 0; x < tape.out_width; ++x) {
        dz(b, 0, y, x) = grad_out(b, 0, y, x) *
                         activate_deriv(cfg_.output_activation, z(b, 0, y, x));
      }
    }
  }

  Tensor<T> dh1;
  layers::conv_backward(head2_, P, G, tape.head_hidden, tape.cols[n_enc + kNumScales + 1], dz,
                        &dh1, scratch, dcol);
  layers::relu_backward_inplace(tape.head_hidden, dh1);
  Tensor<T> dconcat;
  layers::conv_backward(head1_, P, G, tape.concat, tape.cols[n_enc + kNumScales], dh1,
                        &dconcat, scratch, dcol);

  const int cps = cfg_.backbone.convs_per_stage;
  const int cc = cfg_.decoder.compress_channels;
  std::vector<Tensor<T>> dfeat(kNumScales);
  for (int s = 0; s < kNumScales; ++s) {
    const Tensor<T>& att = tape.attended[s];
    Tensor<T> dcomp(att.batch(), cc, att.height(), att.width());
    layers::upsample_backward(dconcat, s * cc, dcomp);
    Tensor<T> datt;
    layers::conv_backward(compress_[s], P, G, att, tape.cols[n_enc + s], dcomp, &datt,
                          scratch, dcol);
    const Tensor<T>& feat = tape.encoder[static_cast<std::size_t>((s + 1) * cps - 1)];
    dfeat[s] = layers::attention_backward(attention_[s], P, G, feat, tape.pooled[s],
                                          tape.hidden[s], tape.gate[s], datt);
  }

  Tensor<T> dcur;
  for (int li = static_cast<int>(encoder_.size()) - 1; li >= 0; --li) {
    if (li % cps == cps - 1) {
      const Tensor<T>& add = dfeat[static_cast<std::size_t>(li / cps)];
      if (dcur.empty()) {
        dcur = add;
      } else {
        T* d = dcur.data();
        const T* a = add.data();
        for (std::size_t i = 0; i < dcur.size(); ++i) d[i] += a[i];
      }
    }
    layers::relu_backward_inplace(tape.encoder[static_cast<std::size_t>(li)], dcur);
    const Tensor<T>& input =
        li == 0 ? tape.input : tape.encoder[static_cast<std::size_t>(li - 1)];
    Tensor<T> dprev;
    layers::conv_backward(encoder_[static_cast<std::size_t>(li)], P, G, input,
                          tape.cols[static_cast<std::size_t>(li)], dcur,
                          li == 0 ? nullptr : &dprev, scratch, dcol);
    dcur = std::move(dprev);
  }
}

template class DepthNet<float>;
template class DepthNet<double>;

// --- toy backbone -------------------------------------------------------------

ToyBackbone make_toy_backbone(const std::vector<int>& widths, std::uint64_t seed,
                              int convs_per_stage) {
  ModelConfig cfg;
  cfg.backbone.name = "toy";
  cfg.backbone.channels = widths;
  cfg.backbone.convs_per_stage = convs_per_stage;
  validate(cfg);
  // Same tensor order and streams as the encoder part of DepthNet::create.
  ToyBackbone out;
  out.spec = cfg.backbone;
  const auto layout = DepthNet<double>::create(cfg, 0).param_info();
  std::uint64_t index = 0;
  for (const auto& p : layout) {
    if (!is_encoder(p.name)) continue;
    ParamInfo q = p;
    q.offset = out.weights.size();
    out.weights.resize(out.weights.size() + p.size);
    init_tensor(std::span<double>(out.weights.data() + q.offset, q.size), q.fan_in, 2.0,
                derive_seed(seed, index++));
    out.info.push_back(std::move(q));
  }
  return out;
}

// --- checkpoints ----------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'L', 'W', 'D', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& s, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  }
  return v;
}
}  // namespace

void save_checkpoint(const DepthNet<float>& net, const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : net.param_info()) {
    tensors.push_back(
        {{"name", p.name}, {"shape", p.shape}, {"offset", p.offset}, {"size", p.size}});
  }
  const nlohmann::json header{{"format", "lwdepth-checkpoint"},
                              {"version", 1},
                              {"config", net.config()},
                              {"tensors", std::move(tensors)}};
  const std::string hs = header.dump();
  std::string bytes(kMagic, sizeof kMagic);
  put_u64(bytes, hs.size());
  bytes += hs;
  for (float v : net.parameters()) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

DepthNet<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ParseError("not a checkpoint: bad magic in '" + path.string() + "'", 0);
  }
  const std::uint64_t hlen = get_u64(bytes, 8);
  if (bytes.size() < 16 + hlen) throw ParseError("truncated checkpoint header", bytes.size());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid checkpoint header: ") + e.what(), 16 + e.byte);
  }
  ModelConfig cfg = header.at("config").get<ModelConfig>();
  DepthNet<float> net = DepthNet<float>::create(cfg, 0);
  const std::size_t payload = 16 + hlen;
  if (bytes.size() != payload + net.num_parameters() * 4) {
    throw ParseError("checkpoint payload size does not match its config",
                     bytes.size() < payload + net.num_parameters() * 4 ? bytes.size()
                                                                       : payload);
  }
  const auto& info = net.param_info();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != info.size()) throw ParseError("checkpoint tensor count mismatch", 16);
  for (std::size_t t = 0; t < info.size(); ++t) {
    if (tensors[t].at("name").get<std::string>() != info[t].name ||
        tensors[t].at("offset").get<std::size_t>() != info[t].offset ||
        tensors[t].at("size").get<std::size_t>() != info[t].size) {
      throw ParseError("checkpoint tensor '" + tensors[t].at("name").get<std::string>() +
                           "' does not match the model layout",
                       16);
    }
  }
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::uint32_t u = 0;
    for (int k = 0; k < 4; ++k) {
      u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[payload + 4 * i + k]))
           << (8 * k);
    }
    params[i] = std::bit_cast<float>(u);
  }
  return net;
}

}  // namespace lwdepth
