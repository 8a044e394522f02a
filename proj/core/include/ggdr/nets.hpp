#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>

namespace ggdr {

enum class DecoderActivation { kLinear, kLeakyRelu };
enum class UpsampleMode { kNearest, kBilinear };

std::string to_string(DecoderActivation a);
std::string to_string(UpsampleMode m);
DecoderActivation parse_decoder_activation(const std::string& s);
UpsampleMode parse_upsample_mode(const std::string& s);

/// Architecture of the generator / U-Net discriminator pair.
///
/// Both networks share one channel schedule: a map at resolution r carries
/// min(channel_max, base_channels * image_size / r) channels.
struct NetConfig {
  std::int64_t image_size = 32;
  std::int64_t image_channels = 3;
  std::int64_t z_dim = 64;
  std::int64_t base_channels = 16;
  std::int64_t channel_max = 128;
  /// Resolution of the guidance map; 0 selects image_size / 4.
  std::int64_t guidance_resolution = 0;
  std::int64_t decoder_kernel = 1;
  DecoderActivation decoder_activation = DecoderActivation::kLinear;
  UpsampleMode decoder_upsample = UpsampleMode::kNearest;
  /// Without a decoder the discriminator is the plain baseline network.
  bool use_decoder = true;
  /// > 0 adds a per-pixel class head on the decoder (auxiliary segmentation).
  std::int64_t seg_classes = 0;

  std::int64_t guidance() const {
    return guidance_resolution > 0 ? guidance_resolution : image_size / 4;
  }
  std::int64_t channels_at(std::int64_t resolution) const;

  /// Throws ConfigError when the configuration cannot be built.
  void validate() const;

  bool operator==(const NetConfig&) const = default;
};

using FeaturePyramid = std::map<std::int64_t, torch::Tensor>;

struct GeneratorOutput {
  torch::Tensor image;     // [B, C, H, W] in [-1, 1]
  FeaturePyramid pyramid;  // resolution -> [B, C_r, r, r]
};

struct DiscriminatorOutput {
  torch::Tensor logit;          // [B]
  FeaturePyramid decoder_maps;  // resolution -> [B, C_r, r, r]
  FeaturePyramid encoder_maps;  // resolution -> [B, C_r, r, r]
  torch::Tensor seg_logits;     // [B, classes, H, W] when seg_classes > 0
};

// Equalized-learning-rate layers: weights are stored N(0, 1) and scaled by
// 1/sqrt(fan_in) at run time, which keeps Adam's effective step size uniform
// across layers of different width.

class EqConv2dImpl : public torch::nn::Module {
 public:
  EqConv2dImpl(std::int64_t in, std::int64_t out, std::int64_t kernel,
               at::Generator& gen);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight, bias;

 private:
  double scale_;
  std::int64_t padding_;
};
TORCH_MODULE(EqConv2d);

class EqLinearImpl : public torch::nn::Module {
 public:
  EqLinearImpl(std::int64_t in, std::int64_t out, at::Generator& gen);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight, bias;

 private:
  double scale_;
};
TORCH_MODULE(EqLinear);

/// Leaky ReLU (slope 0.2) with the sqrt(2) gain that preserves activation
/// magnitude under equalized initialization.
torch::Tensor lrelu(const torch::Tensor& x);

class GeneratorImpl : public torch::nn::Module {
 public:
  GeneratorImpl(const NetConfig& config, at::Generator& gen);

  /// Every block's post-activation output is tapped into the pyramid.
  GeneratorOutput forward(const torch::Tensor& z);

  const NetConfig& config() const { return config_; }

 private:
  NetConfig config_;
  EqLinear fc_{nullptr};
  EqConv2d conv4_{nullptr};
  torch::nn::ModuleList blocks_;
  EqConv2d to_image_{nullptr};
};
TORCH_MODULE(Generator);

struct DiscriminateOptions {
  bool decoder = true;
  bool segmentation = false;
};

class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl(const NetConfig& config, at::Generator& gen);

  DiscriminatorOutput forward(const torch::Tensor& x,
                              DiscriminateOptions options = {});

  const NetConfig& config() const { return config_; }
  bool has_decoder() const { return !decoder_.is_empty(); }
  /// Decoder stages, one per output resolution; empty without a decoder.
  torch::nn::ModuleList& decoder() { return decoder_; }
  const std::vector<std::int64_t>& decoder_resolutions() const {
    return decoder_resolutions_;
  }

 private:
  NetConfig config_;
  EqConv2d from_image_{nullptr};
  torch::nn::ModuleList encoder_;
  EqConv2d head_conv_{nullptr};
  EqLinear head_fc_{nullptr};
  EqLinear head_out_{nullptr};
  torch::nn::ModuleList decoder_;
  std::vector<std::int64_t> decoder_resolutions_;
  EqConv2d seg_head_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Builds a generator with weights drawn from a generator seeded by `seed`.
Generator build_generator(const NetConfig& config, std::uint64_t seed);
Discriminator build_discriminator(const NetConfig& config, std::uint64_t seed);

/// Checks z and runs the generator.
GeneratorOutput generate(Generator& gen, const torch::Tensor& z);
/// Checks the image shape and runs the full discriminator (logit + decoder).
DiscriminatorOutput discriminate(Discriminator& disc, const torch::Tensor& image);

/// Total number of scalar parameters, recursing into submodules.
std::int64_t count_params(const torch::nn::Module& net);

/// Copies parameter values of `src` into `dst` (same architecture).
void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst);

}  // namespace ggdr
