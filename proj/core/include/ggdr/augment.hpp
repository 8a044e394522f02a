#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace ggdr {

/// Spatial transform shared by a fake image and its generator feature map.
///
/// Expressed in normalized [-1, 1] coordinates so one instance applies at any
/// resolution. Forward order: horizontal flip, quarter-turn rotation, isotropic
/// scale about the center, translation. Flip and rotation are executed as exact
/// index permutations; scale and translation resample bicubically with
/// reflection padding.
struct GeometricTransform {
  enum Op : std::uint8_t {
    kFlip = 1 << 0,
    kRotate = 1 << 1,
    kTranslate = 1 << 2,
    kScale = 1 << 3,
  };

  bool flip = false;
  int quarter_turns = 0;  // 0..3, counter-clockwise
  double tx = 0.0;        // normalized, +1 == half the width
  double ty = 0.0;
  double scale = 1.0;
  std::uint8_t applied = 0;  // which ops were activated when sampling
  std::uint64_t id = 0;      // pairs an image with its feature map

  bool is_identity() const;
  bool needs_resampling() const { return tx != 0.0 || ty != 0.0 || scale != 1.0; }

  /// Row-major 3x3 homogeneous matrix mapping input coordinates to output
  /// coordinates (x to the right, y downwards, both in [-1, 1]).
  std::array<double, 9> forward_matrix() const;
};

struct AugmentRanges {
  /// Translation is drawn as a whole number of pixels at this resolution.
  std::int64_t image_size = 32;
  double max_translate = 0.125;  // fraction of the width
  double scale_min = 0.8;
  double scale_max = 1.25;
};

/// Each of the four ops is activated independently with probability p.
/// Activated ops: flip always flips, rotation picks 1..3 quarter turns,
/// translation picks integer pixel offsets up to max_translate * width per
/// axis, scale is log-uniform in [scale_min, scale_max].
GeometricTransform sample_transform(std::mt19937_64& rng, double p,
                                    const AugmentRanges& ranges = {});

/// `image` is [C, H, W] or [B, C, H, W]; the same transform is applied to every
/// sample in the batch.
torch::Tensor apply_to_image(const GeometricTransform& transform,
                             const torch::Tensor& image);

/// Same geometry at feature resolution. Feature maps never receive color ops.
torch::Tensor apply_to_feature_map(const GeometricTransform& transform,
                                   const torch::Tensor& fmap);

/// Per-sample transforms over a batch [B, C, H, W]; transforms.size() == B.
torch::Tensor apply_per_sample(std::span<const GeometricTransform> transforms,
                               const torch::Tensor& batch);

/// Threshold controller for the augmentation probability.
struct AdaState {
  double p = 0.0;
  double target_rt = 0.6;
  double step_size = 1e-3;
  /// Number of logit batches averaged before each adjustment.
  std::int64_t window = 1;
  double sign_sum = 0.0;
  std::int64_t sign_count = 0;
  std::int64_t batches = 0;
  double last_rt = 0.0;
};

/// Accumulates sign(real_logit); once `window` batches are in, moves p by
/// step_size towards keeping r_t = E[sign(D(x))] at target_rt, clamped to [0, 1].
AdaState ada_update(AdaState state, const torch::Tensor& real_logits);

}  // namespace ggdr
