#include "ggdr/losses.hpp"

#include "ggdr/errors.hpp"

namespace ggdr {

namespace {

void require_nonempty(const torch::Tensor& t, const char* what) {
  if (!t.defined() || t.numel() == 0) {
    throw InputError(std::string(what) + " must be a non-empty batch");
  }
}

std::string shape_str(const torch::Tensor& t) {
  std::string s = "[";
  for (std::int64_t i = 0; i < t.dim(); ++i) {
    if (i) s += ", ";
    s += std::to_string(t.size(i));
  }
  return s + "]";
}

}  // namespace

torch::Tensor adv_loss_d(const torch::Tensor& real_logits,
                         const torch::Tensor& fake_logits) {
  require_nonempty(real_logits, "real logits");
  require_nonempty(fake_logits, "fake logits");
  return torch::softplus(-real_logits).mean() + torch::softplus(fake_logits).mean();
}

torch::Tensor adv_loss_g(const torch::Tensor& fake_logits) {
  require_nonempty(fake_logits, "fake logits");
  return torch::softplus(-fake_logits).mean();
}

torch::Tensor cosine_distance(const torch::Tensor& pred, const torch::Tensor& target) {
  if (!pred.defined() || !target.defined() || pred.sizes() != target.sizes()) {
    throw InputError("cosine_distance shape mismatch: " + shape_str(pred) +
                     " vs " + shape_str(target));
  }
  if (pred.dim() < 2) throw InputError("cosine_distance expects [B, C, ...] maps");
  const auto t = target.detach();
  const auto dot = (pred * t).sum(1);
  const auto pn = at::linalg_vector_norm(pred, 2, {1});
  const auto tn = at::linalg_vector_norm(t, 2, {1});
  return (1.0 - dot / (pn * tn + kCosineEps)).mean();
}

torch::Tensor ggdr_loss(const DiscriminatorOutput& disc_out,
                        const GeneratorOutput& gen_out, std::int64_t t) {
  const auto pred = disc_out.decoder_maps.find(t);
  const auto target = gen_out.pyramid.find(t);
  if (pred == disc_out.decoder_maps.end()) {
    throw ConfigError("discriminator has no decoder map at resolution " +
                      std::to_string(t));
  }
  if (target == gen_out.pyramid.end()) {
    throw ConfigError("generator has no feature map at resolution " +
                      std::to_string(t));
  }
  return cosine_distance(pred->second, target->second.detach());
}

torch::Tensor r1_from_logits(const torch::Tensor& logits, const torch::Tensor& inputs,
                             double gamma) {
  if (gamma < 0.0) throw ConfigError("r1 gamma must be >= 0");
  if (!logits.requires_grad()) return torch::zeros({}, inputs.options());
  auto grads = torch::autograd::grad({logits.sum()}, {inputs}, {},
                                     /*retain_graph=*/true, /*create_graph=*/true,
                                     /*allow_unused=*/true);
  auto g = grads[0];
  if (!g.defined()) g = torch::zeros_like(inputs);
  const auto sq = g.square().flatten(1).sum(1);
  return sq.mean() * (gamma / 2.0);
}

torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& logit_fn,
                         const torch::Tensor& real_images, double gamma) {
  if (gamma < 0.0) throw ConfigError("r1 gamma must be >= 0");
  require_nonempty(real_images, "real images");
  auto x = real_images.detach().requires_grad_(true);
  return r1_from_logits(logit_fn(x), x, gamma);
}

torch::Tensor r1_penalty(Discriminator& disc, const torch::Tensor& real_images,
                         double gamma) {
  return r1_penalty(
      [&](const torch::Tensor& x) {
        return disc->forward(x, {.decoder = false}).logit;
      },
      real_images, gamma);
}

torch::Tensor aux_segmentation_loss(const torch::Tensor& logits,
                                    const torch::Tensor& labels) {
  if (logits.dim() != 4 || labels.dim() != 3 || logits.size(0) != labels.size(0) ||
      logits.size(2) != labels.size(1) || logits.size(3) != labels.size(2)) {
    throw InputError("segmentation logits " + shape_str(logits) +
                     " do not match labels " + shape_str(labels));
  }
  const auto classes = logits.size(1);
  const auto lab = labels.to(torch::kInt64);
  if (lab.numel() > 0 &&
      (lab.min().item<std::int64_t>() < 0 || lab.max().item<std::int64_t>() >= classes)) {
    throw InputError("segmentation label outside [0, " + std::to_string(classes) + ")");
  }
  return torch::nn::functional::cross_entropy(logits, lab);
}

double total_d_loss(double adv_d, double ggdr, double lambda_reg, double r1) {
  return adv_d + lambda_reg * ggdr + r1;
}

}  // namespace ggdr
