#pragma once

#include <torch/torch.h>

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ggdr/data_io.hpp"
#include "ggdr/nets.hpp"

namespace ggdr {

/// Maps an image batch to a feature matrix. Metrics computed with different
/// tags are not comparable.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string tag() const = 0;
  virtual std::int64_t dim() const = 0;
  /// images [N, C, H, W] in [-1, 1] -> [N, dim()].
  virtual Eigen::MatrixXd embed(const torch::Tensor& images) const = 0;
};

/// Fixed-seed random convolutional embedding: three conv/leaky-ReLU stages;
/// the feature vector is the global average of every stage's channels.
class RandomConvExtractor final : public FeatureExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed = 0, std::int64_t image_channels = 3);
  std::string tag() const override;
  std::int64_t dim() const override;
  Eigen::MatrixXd embed(const torch::Tensor& images) const override;

 private:
  std::uint64_t seed_;
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};

/// Small convolutional classifier trained on a labeled dataset; supplies class
/// posteriors for the Inception Score and penultimate features as an embedding.
class TinyClassifier final : public FeatureExtractor {
 public:
  TinyClassifier(std::int64_t image_channels, std::int64_t classes, std::uint64_t seed);

  /// Full-batch-order Adam training for `steps` minibatches of `batch` images.
  void fit(const torch::Tensor& images, const torch::Tensor& labels, std::int64_t steps,
           std::int64_t batch = 64);
  double accuracy(const torch::Tensor& images, const torch::Tensor& labels) const;
  /// [N, classes] softmax probabilities (rows sum to 1).
  Eigen::MatrixXd class_probs(const torch::Tensor& images) const;

  std::string tag() const override;
  std::int64_t dim() const override;
  Eigen::MatrixXd embed(const torch::Tensor& images) const override;
  std::int64_t classes() const { return classes_; }

 private:
  torch::Tensor features(const torch::Tensor& images) const;
  torch::Tensor logits(const torch::Tensor& images) const;

  std::int64_t classes_;
  std::uint64_t seed_;
  std::int64_t trained_steps_ = 0;
  std::shared_ptr<torch::nn::Module> net_;
  torch::nn::Conv2d c1_{nullptr}, c2_{nullptr}, c3_{nullptr};
  torch::nn::Linear fc_{nullptr};
};

/// Image-level label of a synthetic-shapes mask: the shape class (0-based,
/// disk = 0) covering the most pixels.
torch::Tensor dominant_shape_labels(const torch::Tensor& masks);

struct GaussianStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

/// Sample mean and unbiased covariance of the rows of `features` (n >= 2).
GaussianStats gaussian_stats(const Eigen::MatrixXd& features);

/// Symmetric PSD square root by eigendecomposition, negative eigenvalues
/// clamped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

/// Frechet distance between two Gaussians:
/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
double fid(const GaussianStats& a, const GaussianStats& b);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

/// k-NN manifold precision / recall. Each point's ball radius is the distance
/// to its k-th nearest neighbour inside its own set.
PrecisionRecall precision_recall(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake,
                                 int k = 3);

/// exp(E_x KL(p(y|x) || p(y))). Rows must be probability vectors.
double inception_score(const Eigen::MatrixXd& class_probs);

/// Indices sorted by ascending Gaussian log-likelihood (worst first, stable).
/// Falls back to a diagonal covariance (with a warning) when the full one is
/// singular or n < d + 2; `used_diagonal` reports which model was used.
std::vector<std::int64_t> rank_worst(const Eigen::MatrixXd& features,
                                     bool* used_diagonal = nullptr);

/// Per-sample log-likelihoods under the fitted Gaussian (same model as rank_worst).
Eigen::VectorXd gaussian_log_likelihood(const Eigen::MatrixXd& features,
                                        bool* used_diagonal = nullptr);

struct MetricResult {
  std::optional<double> fid;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> inception_score;
  std::string extractor_tag;
  std::int64_t n_real = 0;
  std::int64_t n_fake = 0;
};

struct EvalRequest {
  bool fid = true;
  bool precision_recall = true;
  bool inception_score = false;
  std::int64_t n_fake = 10000;
  /// Cap on real images used (0 = all).
  std::int64_t n_real = 0;
  std::uint64_t seed = 0;
  int k = 3;
  std::int64_t batch = 250;
};

/// Samples `n_fake` images from `generator` with latents drawn from `seed`.
torch::Tensor sample_images(Generator& generator, std::int64_t n, std::uint64_t seed,
                            std::int64_t batch = 250);

Eigen::MatrixXd embed_batched(const FeatureExtractor& extractor, const torch::Tensor& images,
                              std::int64_t batch = 250);

/// Metrics of a generator against real images. IS needs `classifier`.
MetricResult evaluate(Generator& generator, const torch::Tensor& real_images,
                      const FeatureExtractor& extractor, const EvalRequest& request,
                      const TinyClassifier* classifier = nullptr);

}  // namespace ggdr
