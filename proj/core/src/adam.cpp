#include "ggdr/adam.hpp"

#include <cmath>

#include "ggdr/errors.hpp"

namespace ggdr {

Adam::Adam(std::vector<torch::Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    exp_avg_.push_back(torch::zeros_like(p, torch::MemoryFormat::Preserve));
    exp_avg_sq_.push_back(torch::zeros_like(p, torch::MemoryFormat::Preserve));
  }
}

void Adam::step(const std::vector<torch::Tensor>& grads) {
  if (grads.size() != params_.size()) {
    throw InputError("Adam::step: gradient list does not match parameters");
  }
  torch::NoGradGuard no_grad;
  ++step_count_;
  const double beta1 = options_.beta1;
  const double beta2 = options_.beta2;
  const double bias_correction1 = 1 - std::pow(beta1, static_cast<double>(step_count_));
  const double bias_correction2 = 1 - std::pow(beta2, static_cast<double>(step_count_));
  const double step_size = options_.lr / bias_correction1;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto grad = grads[i].defined() ? grads[i] : torch::zeros_like(params_[i]);
    exp_avg_[i].mul_(beta1).add_(grad, 1 - beta1);
    exp_avg_sq_[i].mul_(beta2).addcmul_(grad, grad, 1 - beta2);
    auto denom = (exp_avg_sq_[i].sqrt() / std::sqrt(bias_correction2)).add_(options_.eps);
    params_[i].addcdiv_(exp_avg_[i], denom, -step_size);
  }
}

}  // namespace ggdr
