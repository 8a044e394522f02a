#include "ggdr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ggdr/errors.hpp"
#include "ggdr/log.hpp"
#include "ggdr/rng.hpp"

namespace ggdr {

namespace {

std::int64_t count_distinct_rows(const Eigen::MatrixXd& points, std::int64_t enough) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.rows()));
  std::iota(order.begin(), order.end(), 0);
  const auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
      if (points(a, c) != points(b, c)) return points(a, c) < points(b, c);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  std::int64_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size() && distinct < enough; ++i) {
    if (less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

double sq_dist(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b,
               Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

// Assigns every point to its nearest centroid (lowest index on ties).
// Returns the inertia.
double assign(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
              std::vector<std::int64_t>& labels, std::vector<double>& dists) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::int64_t best_j = 0;
    for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
      const double d = sq_dist(points, i, centroids, j);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    labels[static_cast<std::size_t>(i)] = best_j;
    dists[static_cast<std::size_t>(i)] = best;
    inertia += best;
  }
  return inertia;
}

Eigen::MatrixXd standardized(const Eigen::MatrixXd& points) {
  const Eigen::RowVectorXd mean = points.colwise().mean();
  Eigen::MatrixXd centered = points.rowwise() - mean;
  const double denom = std::max<double>(1.0, static_cast<double>(points.rows() - 1));
  Eigen::RowVectorXd sd = (centered.array().square().colwise().sum() / denom).sqrt();
  for (Eigen::Index c = 0; c < sd.size(); ++c) {
    if (!(sd(c) > 0.0)) sd(c) = 1.0;
  }
  return centered.array().rowwise() / sd.array();
}

Eigen::MatrixXd to_points(const torch::Tensor& fmap) {
  // [B, C, r, r] -> [B*r*r, C], rows ordered (b, y, x).
  const auto flat = fmap.detach().to(torch::kFloat64).permute({0, 2, 3, 1}).contiguous();
  const auto c = fmap.size(1);
  const auto n = flat.numel() / c;
  Eigen::MatrixXd points(n, c);
  const double* src = flat.data_ptr<double>();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) points(i, j) = src[i * c + j];
  return points;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    const KMeansOptions& options) {
  if (k < 1) throw InputError("k-means needs k >= 1");
  if (options.max_iterations < 1) throw InputError("k-means needs max_iterations >= 1");
  if (!points.allFinite()) throw InputError("k-means input contains non-finite values");
  if (count_distinct_rows(points, k) < k) {
    throw InputError("k-means: fewer distinct points than k = " + std::to_string(k));
  }
  const Eigen::MatrixXd x = options.standardize ? standardized(points) : points;
  const auto n = x.rows();

  // k-means++ seeding.
  std::mt19937_64 eng(derive_seed(seed, 0x4b4d45414e53));
  Eigen::MatrixXd centroids(k, x.cols());
  centroids.row(0) = x.row(uniform_int(eng, 0, n - 1));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(x, i, centroids, 0);
  for (int j = 1; j < k; ++j) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    const double target = uniform01(eng) * total;
    double acc = 0.0;
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += d2[static_cast<std::size_t>(i)];
      if (acc > target) {
        pick = i;
        break;
      }
    }
    if (pick < 0) {
      pick = std::distance(d2.begin(), std::max_element(d2.begin(), d2.end()));
    }
    centroids.row(j) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& v = d2[static_cast<std::size_t>(i)];
      v = std::min(v, sq_dist(x, i, centroids, j));
    }
  }

  KMeansResult result;
  result.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<std::int64_t> labels(static_cast<std::size_t>(n));
  std::vector<double> dists(static_cast<std::size_t>(n));
  for (int it = 0; it < options.max_iterations; ++it) {
    const double inertia = assign(x, centroids, labels, dists);
    result.inertia_history.push_back(inertia);
    result.iterations = it + 1;
    if (labels == result.labels) {
      result.converged = true;
      break;
    }
    result.labels = labels;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto l = labels[static_cast<std::size_t>(i)];
      sums.row(l) += x.row(i);
      ++counts[static_cast<std::size_t>(l)];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        centroids.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
      }
    }
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) continue;
      // Re-seed an empty cluster at the point farthest from its centroid.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto l = result.labels[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(l)] <= 1) continue;
        const double d = sq_dist(x, i, centroids, l);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --counts[static_cast<std::size_t>(result.labels[static_cast<std::size_t>(far)])];
      result.labels[static_cast<std::size_t>(far)] = j;
      counts[static_cast<std::size_t>(j)] = 1;
      centroids.row(j) = x.row(far);
    }
  }
  if (!result.converged) {
    result.inertia = assign(x, centroids, labels, dists);
    result.labels = labels;
  } else {
    result.inertia = result.inertia_history.back();
  }
  result.centroids = centroids;
  return result;
}

ClusterMap kmeans_features(const torch::Tensor& fmap_batch, int k, std::uint64_t seed,
                           const KMeansOptions& options) {
  if (fmap_batch.dim() != 4) throw InputError("kmeans_features expects [B, C, r, r]");
  const auto points = to_points(fmap_batch);
  auto km = kmeans(points, k, seed, options);
  ClusterMap out;
  out.labels = torch::tensor(km.labels, torch::kInt64)
                   .reshape({fmap_batch.size(0), fmap_batch.size(2), fmap_batch.size(3)});
  out.centroids = std::move(km.centroids);
  out.inertia = km.inertia;
  out.inertia_history = std::move(km.inertia_history);
  return out;
}

std::vector<Rgb> default_palette() {
  return {Rgb{230, 25, 75},   Rgb{60, 180, 75},  Rgb{255, 225, 25}, Rgb{0, 130, 200},
          Rgb{245, 130, 48},  Rgb{145, 30, 180}, Rgb{70, 240, 240}, Rgb{240, 50, 230},
          Rgb{210, 245, 60},  Rgb{250, 190, 212}, Rgb{0, 128, 128}, Rgb{170, 110, 40}};
}

Image8 render_overlay(const torch::Tensor& labels, const std::vector<Rgb>& palette, int out_size,
                      const Image8* source, double alpha) {
  if (labels.dim() != 2) throw InputError("render_overlay expects a [r, r] label map");
  if (out_size < 1) throw InputError("render_overlay: out_size must be positive");
  if (alpha < 0.0 || alpha > 1.0) throw InputError("render_overlay: alpha must lie in [0, 1]");
  const auto lab = labels.to(torch::kInt64).contiguous();
  const auto max_label = lab.numel() > 0 ? lab.max().item<std::int64_t>() : 0;
  if (lab.numel() > 0 && lab.min().item<std::int64_t>() < 0) {
    throw InputError("render_overlay: negative label");
  }
  if (static_cast<std::int64_t>(palette.size()) <= max_label) {
    throw InputError("render_overlay: palette has " + std::to_string(palette.size()) +
                     " colors but labels reach " + std::to_string(max_label));
  }
  if (source != nullptr &&
      (source->width != out_size || source->height != out_size ||
       (source->channels != 1 && source->channels != 3))) {
    throw InputError("render_overlay: source image must be out_size x out_size");
  }
  const auto rows = lab.size(0);
  const auto cols = lab.size(1);
  const auto acc = lab.accessor<std::int64_t, 2>();
  Image8 img;
  img.width = out_size;
  img.height = out_size;
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(out_size) * out_size * 3);
  for (int y = 0; y < out_size; ++y) {
    const auto sy = static_cast<std::int64_t>(y) * rows / out_size;
    for (int x = 0; x < out_size; ++x) {
      const auto sx = static_cast<std::int64_t>(x) * cols / out_size;
      const auto& color = palette[static_cast<std::size_t>(acc[sy][sx])];
      for (int c = 0; c < 3; ++c) {
        if (source == nullptr) {
          img.at(x, y, c) = color[static_cast<std::size_t>(c)];
        } else {
          const double base = source->at(x, y, source->channels == 3 ? c : 0);
          const double v = alpha * color[static_cast<std::size_t>(c)] + (1.0 - alpha) * base;
          img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
      }
    }
  }
  return img;
}

Image8 render_overlay_grid(const torch::Tensor& labels, const std::vector<Rgb>& palette,
                           int out_size, int columns, const torch::Tensor& images,
                           double alpha) {
  if (labels.dim() != 3) throw InputError("render_overlay_grid expects [B, r, r] labels");
  if (columns < 1) throw InputError("render_overlay_grid: columns must be >= 1");
  const auto n = labels.size(0);
  torch::Tensor resized;
  if (images.defined()) {
    if (images.dim() != 4 || images.size(0) != n) {
      throw InputError("render_overlay_grid: images must be [B, C, H, W] matching labels");
    }
    resized = images.size(2) == out_size && images.size(3) == out_size
                  ? images
                  : at::upsample_nearest2d(images, {out_size, out_size});
  }
  const int pad = 1;
  const int cols = static_cast<int>(std::min<std::int64_t>(columns, n));
  const int rows = static_cast<int>((n + cols - 1) / cols);
  Image8 grid;
  grid.width = cols * (out_size + pad) + pad;
  grid.height = rows * (out_size + pad) + pad;
  grid.channels = 3;
  grid.pixels.assign(static_cast<std::size_t>(grid.width) * grid.height * 3, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    Image8 src;
    if (resized.defined()) src = tensor_to_image(resized[i]);
    const auto tile = render_overlay(labels[i], palette, out_size,
                                     resized.defined() ? &src : nullptr, alpha);
    const int ox = pad + static_cast<int>(i % cols) * (out_size + pad);
    const int oy = pad + static_cast<int>(i / cols) * (out_size + pad);
    for (int y = 0; y < out_size; ++y)
      for (int x = 0; x < out_size; ++x)
        for (int c = 0; c < 3; ++c) grid.at(ox + x, oy + y, c) = tile.at(x, y, c);
  }
  return grid;
}

ProbeResult linear_probe(const torch::Tensor& features, const torch::Tensor& labels,
                         std::int64_t num_classes, std::int64_t held_out,
                         const ProbeOptions& options) {
  if (features.dim() != 4 || labels.dim() != 3) {
    throw InputError("linear_probe expects features [N, C, h, w] and labels [N, h, w]");
  }
  const auto n = features.size(0);
  if (labels.size(0) != n || labels.size(1) != features.size(2) ||
      labels.size(2) != features.size(3)) {
    throw InputError("linear_probe: labels must match the feature resolution");
  }
  if (held_out < 1 || held_out >= n) throw InputError("linear_probe: held_out must be in [1, N)");
  if (num_classes < 2) throw InputError("linear_probe needs at least two classes");
  const auto lab_all = labels.to(torch::kInt64);
  if (lab_all.min().item<std::int64_t>() < 0 ||
      lab_all.max().item<std::int64_t>() >= num_classes) {
    throw InputError("linear_probe: label out of range");
  }

  torch::NoGradGuard outer_no_grad;
  const auto c = features.size(1);
  const auto n_train = n - held_out;
  auto to_pixels = [&](const torch::Tensor& f) {
    return f.detach().to(torch::kFloat32).permute({0, 2, 3, 1}).reshape({-1, c});
  };
  auto x_train = to_pixels(features.narrow(0, 0, n_train));
  auto x_test = to_pixels(features.narrow(0, n_train, held_out));
  const auto y_train = lab_all.narrow(0, 0, n_train).reshape({-1});
  const auto y_test = lab_all.narrow(0, n_train, held_out).reshape({-1});

  const auto mean = x_train.mean(0, true);
  const auto sd = x_train.std(0, false, true).clamp_min(1e-6);
  x_train = (x_train - mean) / sd;
  x_test = (x_test - mean) / sd;

  ProbeResult result;
  result.train_pixels = x_train.size(0);
  const auto present = torch::bincount(y_train, {}, num_classes).gt(0);
  const auto test_present = torch::bincount(y_test, {}, num_classes).gt(0);
  for (std::int64_t k = 0; k < num_classes; ++k) {
    if (test_present[k].item<bool>() && !present[k].item<bool>()) {
      result.excluded_classes.push_back(k);
    }
  }
  if (!result.excluded_classes.empty()) {
    log::warn("linear_probe: " + std::to_string(result.excluded_classes.size()) +
              " class(es) absent from the training split are not scored");
  }

  auto weight = torch::zeros({c, num_classes}, torch::kFloat32).requires_grad_(true);
  auto bias = torch::zeros({num_classes}, torch::kFloat32).requires_grad_(true);
  torch::optim::Adam opt({weight, bias}, torch::optim::AdamOptions(options.lr));
  std::mt19937_64 eng(derive_seed(options.seed, 0x50524f4245));
  const auto p = x_train.size(0);
  const auto batch = std::min(options.batch, p);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(batch));
  {
    torch::AutoGradMode enable(true);
    for (std::int64_t s = 0; s < options.steps; ++s) {
      for (auto& i : idx) i = uniform_int(eng, 0, p - 1);
      const auto sel = torch::tensor(idx, torch::kInt64);
      const auto logits = torch::addmm(bias, x_train.index_select(0, sel), weight);
      const auto loss =
          torch::nn::functional::cross_entropy(logits, y_train.index_select(0, sel));
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }

  const auto predict = [&](const torch::Tensor& x) {
    return torch::addmm(bias, x, weight).argmax(1);
  };
  result.train_accuracy =
      predict(x_train).eq(y_train).to(torch::kFloat64).mean().item<double>();
  const auto scored = present.index_select(0, y_test);
  result.test_pixels = scored.sum().item<std::int64_t>();
  if (result.test_pixels == 0) {
    throw InputError("linear_probe: no held-out pixel belongs to a trained class");
  }
  const auto correct = predict(x_test).eq(y_test).logical_and(scored);
  result.accuracy = correct.sum().item<double>() / static_cast<double>(result.test_pixels);
  return result;
}

torch::Tensor downsample_labels(const torch::Tensor& masks, std::int64_t resolution) {
  if (masks.dim() != 3) throw InputError("downsample_labels expects [N, H, W]");
  const auto h = masks.size(1);
  const auto w = masks.size(2);
  if (resolution < 1 || h % resolution != 0 || w % resolution != 0) {
    throw InputError("downsample_labels: resolution must divide the mask size");
  }
  const auto sy = h / resolution;
  const auto sx = w / resolution;
  using torch::indexing::Slice;
  return masks.index({Slice(), Slice(sy / 2, torch::indexing::None, sy),
                      Slice(sx / 2, torch::indexing::None, sx)})
      .contiguous();
}

torch::Tensor encoder_features(Discriminator& disc, const torch::Tensor& images,
                               std::int64_t resolution, std::int64_t batch) {
  if (images.dim() != 4) throw InputError("encoder_features expects [N, C, H, W]");
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> chunks;
  for (std::int64_t start = 0; start < images.size(0); start += batch) {
    const auto b = std::min(batch, images.size(0) - start);
    const auto out = disc->forward(images.narrow(0, start, b), {.decoder = false});
    std::vector<torch::Tensor> maps;
    for (const auto& [r, m] : out.encoder_maps) {
      if (r == resolution) {
        maps.push_back(m);
      } else if (r > resolution) {
        maps.push_back(at::adaptive_avg_pool2d(m, {resolution, resolution}));
      } else {
        maps.push_back(at::upsample_bilinear2d(m, {resolution, resolution}, false));
      }
    }
    chunks.push_back(torch::cat(maps, 1));
  }
  return torch::cat(chunks, 0);
}

}  // namespace ggdr
