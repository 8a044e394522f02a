#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace ggdr {

struct AdamOptions {
  double lr = 2e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Adam over an explicit parameter list. Moments are plain tensors so the
/// trainer can checkpoint them; the update arithmetic follows libtorch's
/// torch::optim::Adam operation for operation.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<torch::Tensor> params, AdamOptions options);

  /// grads[i] pairs with params[i]; an undefined gradient counts as zero.
  void step(const std::vector<torch::Tensor>& grads);

  const AdamOptions& options() const { return options_; }
  std::int64_t step_count() const { return step_count_; }
  void set_step_count(std::int64_t n) { step_count_ = n; }
  std::vector<torch::Tensor>& exp_avg() { return exp_avg_; }
  std::vector<torch::Tensor>& exp_avg_sq() { return exp_avg_sq_; }
  const std::vector<torch::Tensor>& exp_avg() const { return exp_avg_; }
  const std::vector<torch::Tensor>& exp_avg_sq() const { return exp_avg_sq_; }

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> exp_avg_;
  std::vector<torch::Tensor> exp_avg_sq_;
  AdamOptions options_;
  std::int64_t step_count_ = 0;
};

}  // namespace ggdr
