#pragma once

#include <torch/torch.h>

#include <functional>
#include <optional>

#include "ggdr/nets.hpp"

namespace ggdr {

/// Norm floor inside the cosine; a zero channel vector scores distance 1.
inline constexpr double kCosineEps = 1e-8;

/// Scalar components of one training step.
///
/// `r1` is the term actually added to `total_d` on regularization steps, i.e.
/// already multiplied by the lazy-regularization interval; it is 0 otherwise.
struct LossReport {
  double adv_d = 0.0;
  double adv_g = 0.0;
  double ggdr = 0.0;
  double r1 = 0.0;
  std::optional<double> aux_seg;
  double total_d = 0.0;
  double total_g = 0.0;
  double lambda_reg = 0.0;
  double r1_gamma = 0.0;
  double p_aug = 0.0;
};

/// Non-saturating discriminator loss: mean softplus(-real) + mean softplus(fake).
torch::Tensor adv_loss_d(const torch::Tensor& real_logits,
                         const torch::Tensor& fake_logits);

/// Non-saturating generator loss: mean softplus(-fake).
torch::Tensor adv_loss_g(const torch::Tensor& fake_logits);

/// Mean over batch and spatial locations of the per-location channel cosine
/// distance 1 - p.t / (|p| |t| + eps). Inputs are [B, C, H, W].
///
/// `target` is detached here; no gradient ever reaches its producer.
torch::Tensor cosine_distance(const torch::Tensor& pred, const torch::Tensor& target);

/// Cosine distance between the decoder map and the generator's feature map
/// at resolution `t`. The generator side is a constant for autograd.
torch::Tensor ggdr_loss(const DiscriminatorOutput& disc_out,
                        const GeneratorOutput& gen_out, std::int64_t t);

/// (gamma / 2) * mean_b |d logit_b / d x_b|^2 with a differentiable graph, so
/// the result can be back-propagated into the logit function's parameters.
torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& logit_fn,
                         const torch::Tensor& real_images, double gamma);
/// R1 from logits already computed on `inputs` (which must require grad).
torch::Tensor r1_from_logits(const torch::Tensor& logits, const torch::Tensor& inputs,
                             double gamma);
torch::Tensor r1_penalty(Discriminator& disc, const torch::Tensor& real_images,
                         double gamma);

/// Mean per-pixel softmax cross-entropy; logits [B, C, H, W], labels [B, H, W].
torch::Tensor aux_segmentation_loss(const torch::Tensor& logits,
                                    const torch::Tensor& labels);

/// adv_d + lambda_reg * ggdr + r1.
double total_d_loss(double adv_d, double ggdr, double lambda_reg, double r1);

}  // namespace ggdr
