#include "ggdr/augment.hpp"

#include <algorithm>
#include <cmath>

#include "ggdr/errors.hpp"
#include "ggdr/rng.hpp"

namespace ggdr {

namespace {

using Mat3 = std::array<double, 9>;

Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

torch::Tensor apply_batched(const GeometricTransform& t, const torch::Tensor& x) {
  if (t.is_identity()) return x;
  auto y = x;
  if (t.flip) y = torch::flip(y, {-1});
  if (t.quarter_turns % 4 != 0) y = torch::rot90(y, t.quarter_turns % 4, {-2, -1});
  if (t.needs_resampling()) {
    // grid_sample wants the output -> input map.
    const double inv = 1.0 / t.scale;
    auto theta = torch::tensor({inv, 0.0, -t.tx * inv, 0.0, inv, -t.ty * inv},
                               torch::TensorOptions().dtype(y.scalar_type()))
                     .view({1, 2, 3})
                     .expand({y.size(0), 2, 3});
    auto grid = at::affine_grid_generator(theta, y.sizes(), /*align_corners=*/false);
    y = at::grid_sampler(y, grid, /*interpolation_mode=*/2, /*padding_mode=*/2,
                         /*align_corners=*/false);
  }
  return y;
}

torch::Tensor apply_any_rank(const GeometricTransform& t, const torch::Tensor& x) {
  if (x.dim() == 3) return apply_batched(t, x.unsqueeze(0)).squeeze(0);
  if (x.dim() == 4) return apply_batched(t, x);
  throw InputError("augmentation expects [C, H, W] or [B, C, H, W] input");
}

}  // namespace

bool GeometricTransform::is_identity() const {
  return !flip && quarter_turns % 4 == 0 && !needs_resampling();
}

std::array<double, 9> GeometricTransform::forward_matrix() const {
  Mat3 m{1, 0, 0, 0, 1, 0, 0, 0, 1};
  if (flip) m = matmul(Mat3{-1, 0, 0, 0, 1, 0, 0, 0, 1}, m);
  // torch::rot90 over (H, W) sends input (x, y) to output (y, -x).
  for (int k = 0; k < quarter_turns % 4; ++k) {
    m = matmul(Mat3{0, 1, 0, -1, 0, 0, 0, 0, 1}, m);
  }
  m = matmul(Mat3{scale, 0, 0, 0, scale, 0, 0, 0, 1}, m);
  m = matmul(Mat3{1, 0, tx, 0, 1, ty, 0, 0, 1}, m);
  return m;
}

GeometricTransform sample_transform(std::mt19937_64& rng, double p,
                                    const AugmentRanges& ranges) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError("augmentation probability must lie in [0, 1]");
  }
  GeometricTransform t;
  t.id = rng();
  if (bernoulli(rng, p)) {
    t.applied |= GeometricTransform::kFlip;
    t.flip = true;
  }
  if (bernoulli(rng, p)) {
    t.applied |= GeometricTransform::kRotate;
    t.quarter_turns = static_cast<int>(uniform_int(rng, 1, 3));
  }
  if (bernoulli(rng, p)) {
    t.applied |= GeometricTransform::kTranslate;
    const auto max_px = static_cast<std::int64_t>(
        std::floor(ranges.max_translate * static_cast<double>(ranges.image_size)));
    const auto px = uniform_int(rng, -max_px, max_px);
    const auto py = uniform_int(rng, -max_px, max_px);
    const auto size = static_cast<double>(ranges.image_size);
    t.tx = 2.0 * static_cast<double>(px) / size;
    t.ty = 2.0 * static_cast<double>(py) / size;
  }
  if (bernoulli(rng, p)) {
    t.applied |= GeometricTransform::kScale;
    t.scale = std::exp(
        uniform(rng, std::log(ranges.scale_min), std::log(ranges.scale_max)));
  }
  return t;
}

torch::Tensor apply_to_image(const GeometricTransform& transform,
                             const torch::Tensor& image) {
  return apply_any_rank(transform, image);
}

torch::Tensor apply_to_feature_map(const GeometricTransform& transform,
                                   const torch::Tensor& fmap) {
  return apply_any_rank(transform, fmap);
}

torch::Tensor apply_per_sample(std::span<const GeometricTransform> transforms,
                               const torch::Tensor& batch) {
  if (batch.dim() != 4 || static_cast<std::size_t>(batch.size(0)) != transforms.size()) {
    throw InputError("need exactly one transform per batch sample");
  }
  const bool all_identity = std::all_of(transforms.begin(), transforms.end(),
                                        [](const auto& t) { return t.is_identity(); });
  if (all_identity) return batch;
  std::vector<torch::Tensor> out;
  out.reserve(transforms.size());
  for (std::size_t i = 0; i < transforms.size(); ++i) {
    out.push_back(apply_batched(transforms[i], batch.narrow(0, static_cast<std::int64_t>(i), 1)));
  }
  return torch::cat(out, 0);
}

AdaState ada_update(AdaState state, const torch::Tensor& real_logits) {
  if (real_logits.numel() == 0) return state;
  state.sign_sum += torch::sign(real_logits.detach()).sum().item<double>();
  state.sign_count += real_logits.numel();
  state.batches += 1;
  if (state.batches >= std::max<std::int64_t>(1, state.window)) {
    const double rt = state.sign_sum / static_cast<double>(state.sign_count);
    state.last_rt = rt;
    state.p += rt > state.target_rt ? state.step_size : -state.step_size;
    state.p = std::clamp(state.p, 0.0, 1.0);
    state.sign_sum = 0.0;
    state.sign_count = 0;
    state.batches = 0;
  }
  return state;
}

}  // namespace ggdr
