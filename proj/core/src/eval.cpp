#include "ggdr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "ggdr/errors.hpp"
#include "ggdr/log.hpp"
#include "ggdr/rng.hpp"

namespace ggdr {

namespace {

constexpr std::int64_t kRandConvChannels[3] = {32, 64, 64};

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
  auto d = t.detach().to(torch::kFloat64).contiguous();
  Eigen::MatrixXd m(d.size(0), d.size(1));
  const auto acc = d.accessor<double, 2>();
  for (std::int64_t i = 0; i < d.size(0); ++i)
    for (std::int64_t j = 0; j < d.size(1); ++j) m(i, j) = acc[i][j];
  return m;
}

void check_image_batch(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(0) < 1) {
    throw InputError("expected an image batch [N, C, H, W]");
  }
}

// Squared distances between rows of a (block) and rows of b, floored at 0.
Eigen::MatrixXd sq_dists(const Eigen::MatrixXd& a, const Eigen::VectorXd& na,
                         const Eigen::MatrixXd& b, const Eigen::VectorXd& nb) {
  Eigen::MatrixXd d = -2.0 * a * b.transpose();
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

constexpr Eigen::Index kBlock = 1024;

// Squared k-NN radius of every row within its own set (self excluded).
Eigen::VectorXd knn_radii_sq(const Eigen::MatrixXd& x, int k) {
  const Eigen::Index n = x.rows();
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Eigen::VectorXd radii(n);
  std::vector<double> row(static_cast<std::size_t>(n));
  for (Eigen::Index start = 0; start < n; start += kBlock) {
    const auto len = std::min(kBlock, n - start);
    const Eigen::MatrixXd d =
        sq_dists(x.middleRows(start, len), norms.segment(start, len), x, norms);
    for (Eigen::Index i = 0; i < len; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = d(i, j);
      row[static_cast<std::size_t>(start + i)] = std::numeric_limits<double>::infinity();
      std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
      radii(start + i) = row[static_cast<std::size_t>(k - 1)];
    }
  }
  return radii;
}

// Fraction of `query` rows inside at least one ball (center row of `ref`,
// squared radius `radii_sq`).
double coverage(const Eigen::MatrixXd& ref, const Eigen::VectorXd& radii_sq,
                const Eigen::MatrixXd& query) {
  const Eigen::VectorXd nr = ref.rowwise().squaredNorm();
  const Eigen::VectorXd nq = query.rowwise().squaredNorm();
  std::int64_t inside = 0;
  for (Eigen::Index start = 0; start < query.rows(); start += kBlock) {
    const auto len = std::min(kBlock, query.rows() - start);
    const Eigen::MatrixXd d = sq_dists(query.middleRows(start, len), nq.segment(start, len), ref, nr);
    for (Eigen::Index i = 0; i < len; ++i) {
      const double qn = nq(start + i);
      for (Eigen::Index j = 0; j < ref.rows(); ++j) {
        // Slack for the rounding of the expanded-norm distance formula.
        const double tol = 1e-12 * (qn + nr(j));
        if (d(i, j) <= radii_sq(j) + tol) {
          ++inside;
          break;
        }
      }
    }
  }
  return static_cast<double>(inside) / static_cast<double>(query.rows());
}

torch::Tensor he_normal(std::vector<std::int64_t> shape, at::Generator& gen) {
  std::int64_t fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  return at::randn(shape, gen, torch::kFloat32) *
         std::sqrt(2.0 / static_cast<double>(fan_in));
}

}  // namespace

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed, std::int64_t image_channels)
    : seed_(seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(seed, 0x52434f4e56));
  std::int64_t in = image_channels;
  for (const auto out : kRandConvChannels) {
    weights_.push_back(he_normal({out, in, 3, 3}, gen));
    biases_.push_back(at::randn({out}, gen, torch::kFloat32) * 0.1);
    in = out;
  }
}

std::string RandomConvExtractor::tag() const {
  return "randconv-v1-s" + std::to_string(seed_) + "-d" + std::to_string(dim());
}

std::int64_t RandomConvExtractor::dim() const {
  return kRandConvChannels[0] + kRandConvChannels[1] + kRandConvChannels[2];
}

Eigen::MatrixXd RandomConvExtractor::embed(const torch::Tensor& images) const {
  check_image_batch(images);
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  auto h = images.to(torch::kFloat32);
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = torch::leaky_relu(at::conv2d(h, weights_[i], biases_[i], 1, 1), 0.2);
    parts.push_back(h.mean({2, 3}));
    if (i + 1 < weights_.size() && h.size(2) >= 2) h = at::avg_pool2d(h, {2, 2});
  }
  return to_eigen(torch::cat(parts, 1));
}

TinyClassifier::TinyClassifier(std::int64_t image_channels, std::int64_t classes,
                               std::uint64_t seed)
    : classes_(classes), seed_(seed), net_(std::make_shared<torch::nn::Module>()) {
  if (classes < 2) throw ConfigError("classifier needs at least two classes");
  namespace nn = torch::nn;
  c1_ = net_->register_module("c1", nn::Conv2d(nn::Conv2dOptions(image_channels, 16, 3).padding(1)));
  c2_ = net_->register_module("c2", nn::Conv2d(nn::Conv2dOptions(16, 32, 3).padding(1)));
  c3_ = net_->register_module("c3", nn::Conv2d(nn::Conv2dOptions(32, 64, 3).padding(1)));
  fc_ = net_->register_module("fc", nn::Linear(64, classes));
  // Re-draw every weight from our own seeded generator (the module defaults
  // use the global torch RNG).
  auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(seed, 0x434c53));
  torch::NoGradGuard no_grad;
  for (auto& p : net_->named_parameters(true)) {
    if (p.key().ends_with("bias")) {
      p.value().zero_();
    } else {
      p.value().copy_(he_normal(p.value().sizes().vec(), gen));
    }
  }
}

torch::Tensor TinyClassifier::features(const torch::Tensor& images) const {
  auto h = torch::leaky_relu(at::conv2d(images, c1_->weight, c1_->bias, 1, 1), 0.2);
  h = at::avg_pool2d(h, {2, 2});
  h = torch::leaky_relu(at::conv2d(h, c2_->weight, c2_->bias, 1, 1), 0.2);
  h = at::avg_pool2d(h, {2, 2});
  h = torch::leaky_relu(at::conv2d(h, c3_->weight, c3_->bias, 1, 1), 0.2);
  return h.mean({2, 3});
}

torch::Tensor TinyClassifier::logits(const torch::Tensor& images) const {
  return at::linear(features(images), fc_->weight, fc_->bias);
}

void TinyClassifier::fit(const torch::Tensor& images, const torch::Tensor& labels,
                         std::int64_t steps, std::int64_t batch) {
  check_image_batch(images);
  if (labels.dim() != 1 || labels.size(0) != images.size(0)) {
    throw InputError("classifier labels must be a vector matching the images");
  }
  torch::optim::Adam opt(net_->parameters(), torch::optim::AdamOptions(2e-3));
  std::mt19937_64 eng(derive_seed(seed_, 0x464954));
  const auto n = images.size(0);
  batch = std::min(batch, n);
  for (std::int64_t s = 0; s < steps; ++s) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(batch));
    for (auto& i : idx) i = uniform_int(eng, 0, n - 1);
    const auto sel = torch::tensor(idx, torch::kInt64);
    auto x = images.index_select(0, sel);
    if (bernoulli(eng, 0.5)) x = x.flip({-1});
    const auto loss = torch::nn::functional::cross_entropy(logits(x), labels.index_select(0, sel));
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  trained_steps_ += steps;
}

double TinyClassifier::accuracy(const torch::Tensor& images, const torch::Tensor& labels) const {
  torch::NoGradGuard no_grad;
  const auto pred = logits(images).argmax(1);
  return pred.eq(labels).to(torch::kFloat64).mean().item<double>();
}

Eigen::MatrixXd TinyClassifier::class_probs(const torch::Tensor& images) const {
  check_image_batch(images);
  torch::NoGradGuard no_grad;
  return to_eigen(torch::softmax(logits(images).to(torch::kFloat64), 1));
}

std::string TinyClassifier::tag() const {
  return "tinycls-v1-s" + std::to_string(seed_) + "-c" + std::to_string(classes_) + "-t" +
         std::to_string(trained_steps_);
}

std::int64_t TinyClassifier::dim() const { return 64; }

Eigen::MatrixXd TinyClassifier::embed(const torch::Tensor& images) const {
  check_image_batch(images);
  torch::NoGradGuard no_grad;
  return to_eigen(features(images));
}

torch::Tensor dominant_shape_labels(const torch::Tensor& masks) {
  if (masks.dim() != 3) throw InputError("masks must be [N, H, W]");
  const auto onehot = torch::one_hot(masks.to(torch::kInt64), kShapeClasses);
  const auto area = onehot.sum({1, 2});  // [N, classes]
  return area.narrow(1, 1, kShapeClasses - 1).argmax(1);
}

GaussianStats gaussian_stats(const Eigen::MatrixXd& features) {
  const auto n = features.rows();
  if (n < 2) throw InputError("gaussian_stats needs at least two samples");
  GaussianStats s;
  s.mu = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mu.transpose();
  s.sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
  s.sigma = 0.5 * (s.sigma + s.sigma.transpose());
  return s;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw InputError("eigendecomposition failed");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double fid(const GaussianStats& a, const GaussianStats& b) {
  if (a.mu.size() != b.mu.size() || a.sigma.rows() != b.sigma.rows() ||
      a.sigma.rows() != a.mu.size()) {
    throw InputError("fid: statistics have mismatched dimensions");
  }
  const Eigen::MatrixXd sa_half = psd_sqrt(a.sigma);
  const Eigen::MatrixXd inner = sa_half * b.sigma * sa_half;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()),
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw InputError("fid: eigendecomposition failed");
  const double tr_covmean = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double mean_term = (a.mu - b.mu).squaredNorm();
  const double value = mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_covmean;
  if (value < 0.0 && value >= -1e-6) return 0.0;
  return value;
}

PrecisionRecall precision_recall(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, int k) {
  if (k < 1) throw InputError("k must be >= 1");
  if (real.rows() <= k || fake.rows() <= k) {
    throw InputError("precision_recall needs more than k points in each set");
  }
  if (real.cols() != fake.cols()) throw InputError("feature dimensions differ");
  const auto real_r = knn_radii_sq(real, k);
  const auto fake_r = knn_radii_sq(fake, k);
  return {coverage(real, real_r, fake), coverage(fake, fake_r, real)};
}

double inception_score(const Eigen::MatrixXd& p) {
  if (p.rows() < 1 || p.cols() < 1) throw InputError("inception_score needs a non-empty matrix");
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if ((p.row(i).array() < 0.0).any() || std::abs(p.row(i).sum() - 1.0) > 1e-6) {
      throw InputError("inception_score: row " + std::to_string(i) +
                       " is not a probability vector");
    }
  }
  const Eigen::VectorXd marginal = p.colwise().mean().transpose();
  double kl_sum = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const double v = p(i, c);
      if (v > 0.0) kl_sum += v * (std::log(v) - std::log(marginal(c)));
    }
  }
  return std::exp(kl_sum / static_cast<double>(p.rows()));
}

Eigen::VectorXd gaussian_log_likelihood(const Eigen::MatrixXd& x, bool* used_diagonal) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (n < 2) throw InputError("rank_worst needs at least two samples");
  const auto stats = gaussian_stats(x);
  const Eigen::MatrixXd centered = x.rowwise() - stats.mu.transpose();
  const double log2pi = std::log(2.0 * std::numbers::pi);

  bool diagonal = n < d + 2;
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!diagonal) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(stats.sigma, Eigen::EigenvaluesOnly);
    const double max_eig = es.eigenvalues().maxCoeff();
    const double min_eig = es.eigenvalues().minCoeff();
    if (!(max_eig > 0.0) || min_eig <= 1e-10 * max_eig) {
      diagonal = true;
    } else {
      llt.compute(stats.sigma);
      diagonal = llt.info() != Eigen::Success;
    }
  }
  if (used_diagonal != nullptr) *used_diagonal = diagonal;

  Eigen::VectorXd ll(n);
  if (diagonal) {
    log::warn("rank_worst: covariance is degenerate (n=" + std::to_string(n) +
              ", d=" + std::to_string(d) + "); using a diagonal model");
    const Eigen::VectorXd var = stats.sigma.diagonal().cwiseMax(1e-12);
    const double log_det = var.array().log().sum();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double maha = (centered.row(i).transpose().array().square() / var.array()).sum();
      ll(i) = -0.5 * (maha + log_det + static_cast<double>(d) * log2pi);
    }
  } else {
    const Eigen::MatrixXd L = llt.matrixL();
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    const Eigen::MatrixXd solved = llt.matrixL().solve(centered.transpose());
    for (Eigen::Index i = 0; i < n; ++i) {
      ll(i) = -0.5 * (solved.col(i).squaredNorm() + log_det + static_cast<double>(d) * log2pi);
    }
  }
  return ll;
}

std::vector<std::int64_t> rank_worst(const Eigen::MatrixXd& features, bool* used_diagonal) {
  const auto ll = gaussian_log_likelihood(features, used_diagonal);
  std::vector<std::int64_t> order(static_cast<std::size_t>(features.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int64_t a, std::int64_t b) { return ll(a) < ll(b); });
  return order;
}

torch::Tensor sample_images(Generator& generator, std::int64_t n, std::uint64_t seed,
                            std::int64_t batch) {
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(seed, 0x4556414c));
  std::vector<torch::Tensor> parts;
  for (std::int64_t done = 0; done < n; done += batch) {
    const auto b = std::min(batch, n - done);
    const auto z = at::randn({b, generator->config().z_dim}, gen);
    parts.push_back(generator->forward(z).image);
  }
  return torch::cat(parts, 0);
}

Eigen::MatrixXd embed_batched(const FeatureExtractor& extractor, const torch::Tensor& images,
                              std::int64_t batch) {
  check_image_batch(images);
  Eigen::MatrixXd out(images.size(0), extractor.dim());
  for (std::int64_t start = 0; start < images.size(0); start += batch) {
    const auto b = std::min(batch, images.size(0) - start);
    out.middleRows(start, b) = extractor.embed(images.narrow(0, start, b));
  }
  return out;
}

MetricResult evaluate(Generator& generator, const torch::Tensor& real_images,
                      const FeatureExtractor& extractor, const EvalRequest& request,
                      const TinyClassifier* classifier) {
  MetricResult result;
  result.extractor_tag = extractor.tag();
  auto reals = real_images;
  if (request.n_real > 0 && request.n_real < reals.size(0)) reals = reals.narrow(0, 0, request.n_real);
  const auto fakes = sample_images(generator, request.n_fake, request.seed, request.batch);
  result.n_real = reals.size(0);
  result.n_fake = fakes.size(0);
  if (request.fid || request.precision_recall) {
    const auto real_f = embed_batched(extractor, reals, request.batch);
    const auto fake_f = embed_batched(extractor, fakes, request.batch);
    if (request.fid) result.fid = fid(gaussian_stats(real_f), gaussian_stats(fake_f));
    if (request.precision_recall) {
      const auto pr = precision_recall(real_f, fake_f, request.k);
      result.precision = pr.precision;
      result.recall = pr.recall;
    }
  }
  if (request.inception_score) {
    if (classifier == nullptr) throw ConfigError("Inception Score needs a trained classifier");
    Eigen::MatrixXd probs(fakes.size(0), classifier->classes());
    for (std::int64_t start = 0; start < fakes.size(0); start += request.batch) {
      const auto b = std::min(request.batch, fakes.size(0) - start);
      probs.middleRows(start, b) = classifier->class_probs(fakes.narrow(0, start, b));
    }
    result.inception_score = inception_score(probs);
  }
  return result;
}

}  // namespace ggdr
