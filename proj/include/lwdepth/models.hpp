#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "lwdepth/tensor.hpp"

namespace lwdepth {

inline constexpr int kNumScales = 5;

/// Encoder description. Scale s produces channels[s] maps at 1/factors[s] of
/// the input. The encoder realized here is a plain stack: per scale one 3x3
/// stride-2 convolution followed by (convs_per_stage - 1) 3x3 stride-1
/// convolutions, each with ReLU.
struct BackboneSpec {
  std::string name = "toy";
  std::vector<int> channels{8, 16, 24, 32, 64};
  std::vector<int> factors{2, 4, 8, 16, 32};
  int convs_per_stage = 1;
};

struct FusionDecoderSpec {
  int compress_channels = 16;
  int compress_kernel = 3;
  int attention_reduction = 4;
  int head_kernel = 5;
  int head_hidden_channels = 80;
};

enum class OutputActivation { kRelu, kSoftplus, kNone };

struct ModelConfig {
  BackboneSpec backbone;
  FusionDecoderSpec decoder;
  OutputActivation output_activation = OutputActivation::kRelu;
  int input_channels = 3;
  double output_bias_init = 0.0;  // initial bias of the last head convolution
  double relu_bias_init = 0.0;    // initial bias of convolutions followed by ReLU
  double output_weight_scale = 1.0;  // multiplies the He-initialized last head weights
};

void validate(const ModelConfig& cfg);

void to_json(nlohmann::json& j, const BackboneSpec& s);
void from_json(const nlohmann::json& j, BackboneSpec& s);
void to_json(nlohmann::json& j, const FusionDecoderSpec& s);
void from_json(const nlohmann::json& j, FusionDecoderSpec& s);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
std::string to_string(OutputActivation a);
OutputActivation output_activation_from_string(const std::string& s);

/// MobileNet-v2 feature widths at 1/2 ... 1/32 (16, 24, 32, 96, 320).
BackboneSpec mobilenet_v2_channels();
/// ResNet-34 feature widths at 1/2 ... 1/32 (64, 64, 128, 256, 512).
BackboneSpec resnet34_channels();

/// Hidden width of the attention bottleneck: ceil(channels / reduction).
int attention_hidden(int channels, int reduction);

/// Exact analytic count of every weight and bias.
std::size_t count_parameters(const ModelConfig& cfg);
std::size_t count_encoder_parameters(const ModelConfig& cfg);
std::size_t count_decoder_parameters(const ModelConfig& cfg);
/// Width of the concatenated multi-scale tensor fed to the head.
int concat_channels(const ModelConfig& cfg);

struct ParamInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  std::size_t fan_in = 0;
};

/// Convolution geometry plus the offsets of its weights in the flat store.
struct ConvLayer {
  int in = 0, out = 0, kernel = 3, stride = 1, pad = 1;
  std::size_t weight = 0, bias = 0;  // weight: out x in x k x k
};

struct AttentionLayer {
  int channels = 0, hidden = 0;
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;  // w1: hidden x C, w2: C x hidden
};

/// Intermediate values recorded by a training forward pass.
template <typename T>
struct ForwardTape {
  int out_height = 0, out_width = 0;  // cropped output size
  Tensor<T> input;                    // padded to a multiple of 32
  std::vector<Tensor<T>> encoder;     // post-ReLU output of every encoder conv
  std::vector<Tensor<T>> pooled;      // per scale: N x C x 1 x 1
  std::vector<Tensor<T>> hidden;      // per scale: N x hidden x 1 x 1 (post-ReLU)
  std::vector<Tensor<T>> gate;        // per scale: N x C x 1 x 1
  std::vector<Tensor<T>> attended;    // per scale: gated features
  Tensor<T> concat;
  Tensor<T> head_hidden;              // post-ReLU
  Tensor<T> head_out;                 // pre-activation, padded size
  // per-conv input buffers for backward: encoder, compress per scale, head
  std::vector<std::vector<T>> cols;
};

/// Fusion-decoder depth network over a plain convolutional encoder.
/// Output is one depth channel at ceil(H/2) x ceil(W/2).
template <typename T>
class DepthNet {
 public:
  DepthNet() = default;

  /// Deterministic He-style initialization from seed.
  static DepthNet create(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  std::size_t num_parameters() const noexcept { return params_.size(); }
  std::span<T> parameters() noexcept { return params_; }
  std::span<const T> parameters() const noexcept { return params_; }
  std::span<T> gradients() noexcept { return grads_; }
  std::span<const T> gradients() const noexcept { return grads_; }
  void zero_grad();
  const std::vector<ParamInfo>& param_info() const noexcept { return info_; }

  /// Inference. Input is N x C x H x W with finite values.
  Tensor<T> forward(const Tensor<T>& rgb) const;
  /// Training forward; records what backward needs.
  Tensor<T> forward(const Tensor<T>& rgb, ForwardTape<T>& tape) const;
  /// Adds dLoss/dparams into gradients() given dLoss/doutput.
  void backward(const ForwardTape<T>& tape, const Tensor<T>& grad_out);

  template <typename U>
  DepthNet<U> cast() const {
    DepthNet<U> out;
    out.assign_layout(cfg_, info_, encoder_, attention_, compress_, head1_, head2_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.parameters()[i] = static_cast<U>(params_[i]);
    }
    return out;
  }

  // Used by cast(); copies the layer layout and sizes the stores.
  void assign_layout(const ModelConfig& cfg, const std::vector<ParamInfo>& info,
                     const std::vector<ConvLayer>& encoder,
                     const std::vector<AttentionLayer>& attention,
                     const std::vector<ConvLayer>& compress, const ConvLayer& head1,
                     const ConvLayer& head2);

 private:
  Tensor<T> run(const Tensor<T>& rgb, ForwardTape<T>* tape) const;
  std::size_t add_param(const std::string& name, std::vector<int> shape,
                        std::size_t fan_in);
  ConvLayer add_conv(const std::string& name, int in, int out, int k, int stride);

  ModelConfig cfg_;
  std::vector<T> params_;
  std::vector<T> grads_;
  std::vector<ParamInfo> info_;
  std::vector<ConvLayer> encoder_;  // all encoder convs in order
  std::vector<AttentionLayer> attention_;
  std::vector<ConvLayer> compress_;
  ConvLayer head1_, head2_;
};

/// Desk-scale encoder: widths per scale, weights drawn from seed.
struct ToyBackbone {
  BackboneSpec spec;
  std::vector<ParamInfo> info;  // offsets into weights
  std::vector<double> weights;
};

ToyBackbone make_toy_backbone(const std::vector<int>& widths, std::uint64_t seed,
                              int convs_per_stage = 1);

/// Seed used for the encoder part of DepthNet::create(cfg, seed).
std::uint64_t encoder_seed(std::uint64_t model_seed);

// --- checkpoints -------------------------------------------------------------
//
// Layout: "LWDCKPT1" | u64 header length | JSON header | f32 payload.
// Header: {"config": ModelConfig, "tensors": [{name, shape, offset, size}]}
// with offsets counted in floats. All integers and floats little-endian.

void save_checkpoint(const DepthNet<float>& net, const std::filesystem::path& path);
DepthNet<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace lwdepth
