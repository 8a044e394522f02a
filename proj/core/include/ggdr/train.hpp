#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ggdr/adam.hpp"
#include "ggdr/archive.hpp"
#include "ggdr/augment.hpp"
#include "ggdr/config.hpp"
#include "ggdr/data_io.hpp"
#include "ggdr/losses.hpp"
#include "ggdr/nets.hpp"

namespace ggdr {

struct AugmentConfig {
  bool enabled = false;
  /// Fixed probability, or the starting value when adaptive.
  double p = 0.0;
  bool adaptive = false;
  double target_rt = 0.6;
  double step_size = 1e-3;
  std::int64_t window = 4;
  /// Real images go through the same geometric pipeline as fakes.
  bool augment_reals = true;

  bool operator==(const AugmentConfig&) const = default;
};

struct TrainConfig {
  NetConfig net;
  double lambda_reg = 10.0;
  double r1_gamma = 1.0;
  /// Lazy R1: evaluated every r1_interval D-steps, scaled by the interval.
  std::int64_t r1_interval = 16;
  AdamOptions optimizer;
  std::int64_t batch_size = 16;
  std::int64_t total_steps = 20000;
  std::uint64_t seed = 0;
  bool ema_enabled = true;
  double ema_decay = 0.999;
  std::int64_t ggdr_start_step = 0;
  bool aux_seg_mode = false;
  double aux_seg_weight = 1.0;
  AugmentConfig augment;
  DatasetSpec data;
  std::int64_t log_interval = 100;
  std::int64_t ckpt_interval = 5000;
  std::int64_t sample_interval = 5000;

  void validate() const;
};

/// Builds a config from flat key/value pairs; unknown keys are errors.
TrainConfig train_config_from(const KeyValues& kv);
TrainConfig load_train_config(const std::filesystem::path& path);
/// Canonical `key = value` listing of every setting (round-trips through
/// train_config_from).
std::string format_train_config(const TrainConfig& config);
KeyValues train_config_to_kv(const TrainConfig& config);

/// Running sums for the current metrics.csv window.
struct MetricAccumulator {
  double adv_d = 0.0;
  double adv_g = 0.0;
  double ggdr = 0.0;
  double r1 = 0.0;
  std::int64_t count = 0;
};

/// Everything needed to continue training bit-exactly.
struct TrainState {
  TrainConfig config;
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  Generator generator_ema{nullptr};
  Adam opt_g;
  Adam opt_d;
  std::int64_t step = 0;
  at::Generator latent_rng;
  std::mt19937_64 augment_rng;
  AdaState ada;
  std::int64_t data_epoch = 0;
  std::int64_t data_position = 0;
  MetricAccumulator metrics;
  /// Pairing ids of the transforms applied to the last d_step's fake images
  /// and to their feature maps (equal element-wise by construction).
  std::vector<std::uint64_t> last_image_transform_ids;
  std::vector<std::uint64_t> last_feature_transform_ids;
};

TrainState init_train_state(const TrainConfig& config);

/// Current augmentation probability (0 when augmentation is off).
double augment_probability(const TrainState& state);

/// One discriminator update. Fakes (image and guidance map) are produced
/// without a generator graph, so only discriminator parameters change.
LossReport d_step(TrainState& state, const Batch& real);

/// One generator update from the non-saturating loss; GGDR is not involved.
/// Updates the EMA generator when enabled, otherwise copies the live weights.
LossReport g_step(TrainState& state);

struct TrainHooks {
  /// Called after every completed step with the merged report.
  std::function<void(const TrainState&, const LossReport&)> on_step;
};

struct TrainResult {
  std::vector<std::string> metric_rows;  // CSV rows written, header excluded
};

/// Runs d_step/g_step pairs until config.total_steps. With a non-empty
/// `out_dir`, appends to metrics.csv every log_interval steps, writes
/// ckpt-<step>.ggdr / latest.ggdr every ckpt_interval and samples-<step>.png
/// every sample_interval.
TrainResult train(TrainState& state, const Dataset& dataset,
                  const std::filesystem::path& out_dir = {}, const TrainHooks& hooks = {});

/// Batch order used by train(); positioned at the state's data cursor.
BatchIterator make_train_iterator(const TrainState& state, const Dataset& dataset);

inline constexpr const char* kMetricsHeader = "step,adv_d,adv_g,ggdr,r1,p_aug";

Archive state_to_archive(const TrainState& state);
/// `expected` (when given) must agree with the stored config on everything
/// except schedule lengths and output intervals; otherwise CheckpointError
/// names the differing keys.
TrainState state_from_archive(const Archive& archive, const TrainConfig* expected = nullptr);

void checkpoint_save(const TrainState& state, const std::filesystem::path& path);
TrainState checkpoint_load(const std::filesystem::path& path,
                           const TrainConfig* expected = nullptr);

/// Fixed latent batch used for sample grids and visualization.
torch::Tensor fixed_latents(const TrainConfig& config, std::int64_t n,
                            std::uint64_t stream = 0);

/// Flattened parameter snapshot, for exact before/after comparisons.
std::vector<torch::Tensor> snapshot_parameters(const torch::nn::Module& net);
bool parameters_equal(const std::vector<torch::Tensor>& a,
                      const std::vector<torch::Tensor>& b);

}  // namespace ggdr
