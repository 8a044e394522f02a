#include "ggdr/nets.hpp"

#include <cmath>

#include "ggdr/errors.hpp"

namespace ggdr {

namespace {

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

torch::Tensor upsample2x(const torch::Tensor& x, UpsampleMode mode) {
  const std::vector<std::int64_t> size{x.size(2) * 2, x.size(3) * 2};
  if (mode == UpsampleMode::kNearest) return at::upsample_nearest2d(x, size);
  return at::upsample_bilinear2d(x, size, /*align_corners=*/false);
}

class GenBlockImpl : public torch::nn::Module {
 public:
  GenBlockImpl(std::int64_t in, std::int64_t out, at::Generator& gen)
      : conv0(register_module("conv0", EqConv2d(in, out, 3, gen))),
        conv1(register_module("conv1", EqConv2d(out, out, 3, gen))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto h = upsample2x(x, UpsampleMode::kBilinear);
    h = lrelu(conv0->forward(h));
    return lrelu(conv1->forward(h));
  }

  EqConv2d conv0, conv1;
};
TORCH_MODULE(GenBlock);

class DiscBlockImpl : public torch::nn::Module {
 public:
  DiscBlockImpl(std::int64_t in, std::int64_t out, at::Generator& gen)
      : conv0(register_module("conv0", EqConv2d(in, in, 3, gen))),
        conv1(register_module("conv1", EqConv2d(in, out, 3, gen))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto h = lrelu(conv0->forward(x));
    h = lrelu(conv1->forward(h));
    return at::avg_pool2d(h, {2, 2});
  }

  EqConv2d conv0, conv1;
};
TORCH_MODULE(DiscBlock);

// One U-Net decoder stage: upsample the previous decoder map, concatenate the
// encoder map of the same resolution, then a single convolution.
class DecoderStageImpl : public torch::nn::Module {
 public:
  DecoderStageImpl(std::int64_t in, std::int64_t out, const NetConfig& c,
                   bool first_at_seed, at::Generator& gen)
      : conv(register_module("conv", EqConv2d(in, out, c.decoder_kernel, gen))),
        activation_(c.decoder_activation),
        upsample_(c.decoder_upsample),
        seed_stage_(first_at_seed) {}

  torch::Tensor forward(const torch::Tensor& prev, const torch::Tensor& skip) {
    torch::Tensor h;
    if (seed_stage_) {
      h = prev;
    } else {
      h = torch::cat({upsample2x(prev, upsample_), skip}, 1);
    }
    h = conv->forward(h);
    return activation_ == DecoderActivation::kLeakyRelu ? lrelu(h) : h;
  }

  EqConv2d conv;

 private:
  DecoderActivation activation_;
  UpsampleMode upsample_;
  bool seed_stage_;
};
TORCH_MODULE(DecoderStage);

}  // namespace

std::string to_string(DecoderActivation a) {
  return a == DecoderActivation::kLinear ? "linear" : "leaky_relu";
}

std::string to_string(UpsampleMode m) {
  return m == UpsampleMode::kNearest ? "nearest" : "bilinear";
}

DecoderActivation parse_decoder_activation(const std::string& s) {
  if (s == "linear") return DecoderActivation::kLinear;
  if (s == "leaky_relu" || s == "lrelu") return DecoderActivation::kLeakyRelu;
  throw ConfigError("unknown decoder activation '" + s + "'");
}

UpsampleMode parse_upsample_mode(const std::string& s) {
  if (s == "nearest") return UpsampleMode::kNearest;
  if (s == "bilinear") return UpsampleMode::kBilinear;
  throw ConfigError("unknown upsample mode '" + s + "'");
}

std::int64_t NetConfig::channels_at(std::int64_t resolution) const {
  return std::max<std::int64_t>(
      1, std::min(channel_max, base_channels * image_size / resolution));
}

void NetConfig::validate() const {
  if (!is_power_of_two(image_size) || image_size < 8) {
    throw ConfigError("image_size must be a power of two >= 8, got " +
                      std::to_string(image_size));
  }
  if (image_channels < 1 || z_dim < 1 || base_channels < 1 || channel_max < 1) {
    throw ConfigError("channel counts and z_dim must be positive");
  }
  const auto t = guidance();
  if (!is_power_of_two(t) || t < 4) {
    throw ConfigError("guidance_resolution must be a power of two >= 4, got " +
                      std::to_string(t));
  }
  if (t > image_size / 2) {
    throw ConfigError("guidance_resolution " + std::to_string(t) +
                      " exceeds image_size/2 = " + std::to_string(image_size / 2));
  }
  if (decoder_kernel != 1 && decoder_kernel != 3) {
    throw ConfigError("decoder_kernel must be 1 or 3");
  }
  if (seg_classes < 0) throw ConfigError("seg_classes must be >= 0");
  if (seg_classes > 0 && !use_decoder) {
    throw ConfigError("segmentation head requires the decoder");
  }
}

torch::Tensor lrelu(const torch::Tensor& x) {
  return torch::leaky_relu(x, 0.2) * std::sqrt(2.0);
}

EqConv2dImpl::EqConv2dImpl(std::int64_t in, std::int64_t out,
                           std::int64_t kernel, at::Generator& gen)
    : scale_(1.0 / std::sqrt(static_cast<double>(in * kernel * kernel))),
      padding_(kernel / 2) {
  weight = register_parameter(
      "weight", at::randn({out, in, kernel, kernel}, gen, torch::kFloat32));
  bias = register_parameter("bias", torch::zeros({out}));
}

torch::Tensor EqConv2dImpl::forward(const torch::Tensor& x) {
  return at::conv2d(x, weight * scale_, bias, /*stride=*/1, padding_);
}

EqLinearImpl::EqLinearImpl(std::int64_t in, std::int64_t out,
                           at::Generator& gen)
    : scale_(1.0 / std::sqrt(static_cast<double>(in))) {
  weight = register_parameter("weight",
                              at::randn({out, in}, gen, torch::kFloat32));
  bias = register_parameter("bias", torch::zeros({out}));
}

torch::Tensor EqLinearImpl::forward(const torch::Tensor& x) {
  return at::linear(x, weight * scale_, bias);
}

GeneratorImpl::GeneratorImpl(const NetConfig& config, at::Generator& gen)
    : config_(config) {
  config_.validate();
  const auto c4 = config_.channels_at(4);
  fc_ = register_module("fc", EqLinear(config_.z_dim, c4 * 16, gen));
  conv4_ = register_module("conv4", EqConv2d(c4, c4, 3, gen));
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (std::int64_t r = 8; r <= config_.image_size; r *= 2) {
    blocks_->push_back(
        GenBlock(config_.channels_at(r / 2), config_.channels_at(r), gen));
  }
  to_image_ = register_module(
      "to_image", EqConv2d(config_.channels_at(config_.image_size),
                           config_.image_channels, 1, gen));
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& z) {
  GeneratorOutput out;
  const auto batch = z.size(0);
  auto x = lrelu(fc_->forward(z)).view({batch, config_.channels_at(4), 4, 4});
  x = lrelu(conv4_->forward(x));
  out.pyramid[4] = x;
  std::int64_t r = 8;
  for (const auto& block : *blocks_) {
    x = block->as<GenBlock>()->forward(x);
    out.pyramid[r] = x;
    r *= 2;
  }
  out.image = torch::tanh(to_image_->forward(x));
  return out;
}

DiscriminatorImpl::DiscriminatorImpl(const NetConfig& config, at::Generator& gen)
    : config_(config) {
  config_.validate();
  const auto s = config_.image_size;
  from_image_ = register_module(
      "from_image", EqConv2d(config_.image_channels, config_.channels_at(s), 1, gen));
  encoder_ = register_module("encoder", torch::nn::ModuleList());
  for (std::int64_t r = s; r >= 8; r /= 2) {
    encoder_->push_back(
        DiscBlock(config_.channels_at(r), config_.channels_at(r / 2), gen));
  }
  const auto c4 = config_.channels_at(4);
  head_conv_ = register_module("head_conv", EqConv2d(c4, c4, 3, gen));
  head_fc_ = register_module("head_fc", EqLinear(c4 * 16, c4, gen));
  head_out_ = register_module("head_out", EqLinear(c4, 1, gen));

  decoder_ = register_module("decoder", torch::nn::ModuleList());
  if (config_.use_decoder) {
    const auto t = config_.guidance();
    if (t == 4) {
      decoder_->push_back(DecoderStage(c4, c4, config_, true, gen));
      decoder_resolutions_.push_back(4);
    } else {
      std::int64_t prev = c4;
      for (std::int64_t r = 8; r <= t; r *= 2) {
        // Output channels follow the generator's schedule so the last stage
        // lands on the guidance map's channel count.
        const auto out = config_.channels_at(r);
        decoder_->push_back(DecoderStage(prev + config_.channels_at(r), out,
                                         config_, false, gen));
        decoder_resolutions_.push_back(r);
        prev = out;
      }
    }
    if (config_.seg_classes > 0) {
      seg_head_ = register_module(
          "seg_head",
          EqConv2d(config_.channels_at(t), config_.seg_classes, 1, gen));
    }
  }
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& x,
                                               DiscriminateOptions options) {
  DiscriminatorOutput out;
  auto h = lrelu(from_image_->forward(x));
  std::int64_t r = config_.image_size;
  out.encoder_maps[r] = h;
  for (const auto& block : *encoder_) {
    h = block->as<DiscBlock>()->forward(h);
    r /= 2;
    out.encoder_maps[r] = h;
  }
  auto y = lrelu(head_conv_->forward(h)).flatten(1);
  y = lrelu(head_fc_->forward(y));
  out.logit = head_out_->forward(y).squeeze(1);

  const bool need_decoder = options.decoder || options.segmentation;
  if (need_decoder && has_decoder()) {
    auto d = out.encoder_maps.at(4);
    for (std::size_t i = 0; i < decoder_resolutions_.size(); ++i) {
      const auto res = decoder_resolutions_[i];
      d = decoder_[i]->as<DecoderStage>()->forward(d, out.encoder_maps.at(res));
      out.decoder_maps[res] = d;
    }
    if (options.segmentation && !seg_head_.is_empty()) {
      auto logits = seg_head_->forward(d);
      out.seg_logits = at::upsample_bilinear2d(
          logits, {config_.image_size, config_.image_size}, false);
    }
  }
  return out;
}

Generator build_generator(const NetConfig& config, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return Generator(config, gen);
}

Discriminator build_discriminator(const NetConfig& config, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return Discriminator(config, gen);
}

GeneratorOutput generate(Generator& gen, const torch::Tensor& z) {
  const auto& c = gen->config();
  if (z.dim() != 2 || z.size(0) < 1 || z.size(1) != c.z_dim) {
    throw InputError("latent batch must have shape [B >= 1, " +
                     std::to_string(c.z_dim) + "]");
  }
  if (!torch::isfinite(z).all().item<bool>()) {
    throw InputError("latent batch contains non-finite values");
  }
  return gen->forward(z);
}

DiscriminatorOutput discriminate(Discriminator& disc, const torch::Tensor& image) {
  const auto& c = disc->config();
  if (image.dim() != 4 || image.size(0) < 1 || image.size(1) != c.image_channels ||
      image.size(2) != c.image_size || image.size(3) != c.image_size) {
    throw InputError("image batch must have shape [B, " +
                     std::to_string(c.image_channels) + ", " +
                     std::to_string(c.image_size) + ", " +
                     std::to_string(c.image_size) + "]");
  }
  return disc->forward(image, {.decoder = true, .segmentation = c.seg_classes > 0});
}

std::int64_t count_params(const torch::nn::Module& net) {
  std::int64_t n = 0;
  for (const auto& p : net.parameters(/*recurse=*/true)) n += p.numel();
  return n;
}

void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst) {
  torch::NoGradGuard no_grad;
  auto s = src.named_parameters(true);
  auto d = dst.named_parameters(true);
  if (s.size() != d.size()) throw InputError("parameter count mismatch in copy");
  for (const auto& item : s) {
    auto* target = d.find(item.key());
    if (target == nullptr) throw InputError("missing parameter " + item.key());
    target->copy_(item.value());
  }
}

}  // namespace ggdr
