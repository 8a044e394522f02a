#pragma once

#include <torch/torch.h>

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "ggdr/nets.hpp"
#include "ggdr/png_io.hpp"

namespace ggdr {

struct KMeansOptions {
  int max_iterations = 100;
  /// Standardize every channel to zero mean / unit variance before clustering.
  bool standardize = false;
};

struct KMeansResult {
  std::vector<std::int64_t> labels;  // one per point, in [0, k)
  Eigen::MatrixXd centroids;         // [k, d], in the clustered space
  double inertia = 0.0;
  /// Inertia after each assignment pass.
  std::vector<double> inertia_history;
  int iterations = 0;
  bool converged = false;
};

/// Seeded k-means++ followed by Lloyd iterations on the rows of `points`.
/// Throws InputError when there are fewer distinct points than k.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    const KMeansOptions& options = {});

struct ClusterMap {
  torch::Tensor labels;  // [B, r, r] int64
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
  std::vector<double> inertia_history;
};

/// Clusters the channel vectors of every location of a [B, C, r, r] batch.
ClusterMap kmeans_features(const torch::Tensor& fmap_batch, int k, std::uint64_t seed,
                           const KMeansOptions& options = {});

using Rgb = std::array<std::uint8_t, 3>;

/// Twelve well-separated colors.
std::vector<Rgb> default_palette();

/// Colors a [r, r] label map, nearest-neighbour upsampled to out_size. With a
/// `source` image (HWC, out_size square) the colors are blended over it with
/// weight `alpha`.
Image8 render_overlay(const torch::Tensor& labels, const std::vector<Rgb>& palette, int out_size,
                      const Image8* source = nullptr, double alpha = 0.5);

/// Overlays of a [B, r, r] batch tiled into one image.
Image8 render_overlay_grid(const torch::Tensor& labels, const std::vector<Rgb>& palette,
                           int out_size, int columns, const torch::Tensor& images = {},
                           double alpha = 0.5);

struct ProbeOptions {
  std::int64_t steps = 1500;
  std::int64_t batch = 4096;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double accuracy = 0.0;
  double train_accuracy = 0.0;
  std::int64_t train_pixels = 0;
  std::int64_t test_pixels = 0;
  /// Classes seen only in the held-out split; their pixels are not scored.
  std::vector<std::int64_t> excluded_classes;
};

/// Per-pixel softmax regression on frozen features [N, C, h, w] with labels
/// [N, h, w]; the last `held_out` images are the test split.
ProbeResult linear_probe(const torch::Tensor& features, const torch::Tensor& labels,
                         std::int64_t num_classes, std::int64_t held_out,
                         const ProbeOptions& options = {});

/// Label maps [N, H, W] sampled at the centers of an r x r grid.
torch::Tensor downsample_labels(const torch::Tensor& masks, std::int64_t resolution);

/// Frozen discriminator encoder features: every encoder map resized to
/// `resolution` and concatenated along channels.
torch::Tensor encoder_features(Discriminator& disc, const torch::Tensor& images,
                               std::int64_t resolution, std::int64_t batch = 250);

}  // namespace ggdr
