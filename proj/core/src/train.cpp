#include "ggdr/train.hpp"


#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ggdr/errors.hpp"
#include "ggdr/log.hpp"
#include "ggdr/png_io.hpp"
#include "ggdr/rng.hpp"

namespace ggdr {

namespace fs = std::filesystem;

namespace {

// Independent seed streams derived from TrainConfig::seed.
constexpr std::uint64_t kGenInitStream = 0x47454e;
constexpr std::uint64_t kDiscInitStream = 0x44495343;
constexpr std::uint64_t kLatentStream = 0x4c4154;
constexpr std::uint64_t kAugmentStream = 0x415547;
constexpr std::uint64_t kDataStream = 0x44415441;
constexpr std::uint64_t kSampleStream = 0x53414d50;

std::vector<torch::Tensor> parameter_list(const torch::nn::Module& net) {
  return net.parameters(/*recurse=*/true);
}

std::vector<torch::Tensor> grads_or_zeros(const torch::Tensor& loss,
                                          const std::vector<torch::Tensor>& params) {
  auto grads = torch::autograd::grad({loss}, params, {}, /*retain_graph=*/false,
                                     /*create_graph=*/false, /*allow_unused=*/true);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].defined()) grads[i] = torch::zeros_like(params[i]);
  }
  return grads;
}

std::vector<GeometricTransform> sample_transforms(TrainState& s, std::int64_t n) {
  const double p = augment_probability(s);
  AugmentRanges ranges;
  ranges.image_size = s.config.net.image_size;
  std::vector<GeometricTransform> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out.push_back(sample_transform(s.augment_rng, p, ranges));
  return out;
}

// Label maps follow the image geometry: warp the one-hot encoding and take
// the argmax, so nearest-class semantics survive bilinear resampling.
torch::Tensor transform_masks(std::span<const GeometricTransform> transforms,
                              const torch::Tensor& masks, std::int64_t classes) {
  auto onehot = torch::one_hot(masks, classes).permute({0, 3, 1, 2}).to(torch::kFloat32);
  return apply_per_sample(transforms, onehot).argmax(1);
}

void check_finite(const LossReport& r, std::int64_t step, const char* which) {
  const bool ok = std::isfinite(r.adv_d) && std::isfinite(r.adv_g) && std::isfinite(r.ggdr) &&
                  std::isfinite(r.r1) && std::isfinite(r.total_d) && std::isfinite(r.total_g) &&
                  (!r.aux_seg || std::isfinite(*r.aux_seg));
  if (ok) return;
  std::ostringstream os;
  os << which << " at step " << step << " produced a non-finite loss: adv_d=" << r.adv_d
     << " adv_g=" << r.adv_g << " ggdr=" << r.ggdr << " r1=" << r.r1
     << " total_d=" << r.total_d << " total_g=" << r.total_g << " p_aug=" << r.p_aug;
  throw TrainingDiverged(os.str());
}

std::string format_row(std::int64_t step, const MetricAccumulator& m, double p_aug) {
  const double n = static_cast<double>(std::max<std::int64_t>(1, m.count));
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.8g,%.8g,%.8g,%.8g,%.8g",
                static_cast<long long>(step), m.adv_d / n, m.adv_g / n, m.ggdr / n, m.r1 / n,
                p_aug);
  return buf;
}

void put_module(Archive& a, const std::string& prefix, const torch::nn::Module& m) {
  for (const auto& p : m.named_parameters(true)) a.put(prefix + p.key(), p.value());
}

void load_module(const Archive& a, const std::string& prefix, torch::nn::Module& m) {
  torch::NoGradGuard no_grad;
  for (auto& p : m.named_parameters(true)) {
    const auto key = prefix + p.key();
    if (!a.contains(key)) throw CheckpointError("checkpoint lacks parameter '" + key + "'");
    const auto t = a.tensor(key);
    if (t.sizes() != p.value().sizes() || t.scalar_type() != p.value().scalar_type()) {
      std::ostringstream os;
      os << "parameter '" << key << "' has shape " << t.sizes() << " " << t.scalar_type()
         << ", the network expects " << p.value().sizes() << " " << p.value().scalar_type();
      throw CheckpointError(os.str());
    }
    p.value().copy_(t);
  }
  const auto stored = a.keys_with_prefix(prefix).size();
  if (stored != m.named_parameters(true).size()) {
    throw CheckpointError("checkpoint has " + std::to_string(stored) + " '" + prefix +
                          "' parameters, the network has " +
                          std::to_string(m.named_parameters(true).size()));
  }
}

void put_adam(Archive& a, const std::string& prefix, const Adam& opt,
              const torch::nn::Module& m) {
  a.put_int(prefix + "step", opt.step_count());
  const auto named = m.named_parameters(true);
  std::size_t i = 0;
  for (const auto& p : named) {
    a.put(prefix + "exp_avg." + p.key(), opt.exp_avg()[i]);
    a.put(prefix + "exp_avg_sq." + p.key(), opt.exp_avg_sq()[i]);
    ++i;
  }
}

void load_adam(const Archive& a, const std::string& prefix, Adam& opt,
               const torch::nn::Module& m) {
  opt.set_step_count(a.integer(prefix + "step"));
  const auto named = m.named_parameters(true);
  std::size_t i = 0;
  for (const auto& p : named) {
    for (auto* slot : {&opt.exp_avg(), &opt.exp_avg_sq()}) {
      const auto key = prefix + (slot == &opt.exp_avg() ? "exp_avg." : "exp_avg_sq.") + p.key();
      const auto t = a.tensor(key);
      if (t.sizes() != (*slot)[i].sizes()) {
        throw CheckpointError("optimizer state '" + key + "' has the wrong shape");
      }
      (*slot)[i].copy_(t);
    }
    ++i;
  }
}

}  // namespace

TrainState init_train_state(const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.config = config;
  s.generator = build_generator(config.net, derive_seed(config.seed, kGenInitStream));
  s.discriminator = build_discriminator(config.net, derive_seed(config.seed, kDiscInitStream));
  s.generator_ema = build_generator(config.net, derive_seed(config.seed, kGenInitStream));
  copy_parameters(*s.generator, *s.generator_ema);
  for (auto& p : s.generator_ema->parameters()) p.requires_grad_(false);
  s.opt_g = Adam(parameter_list(*s.generator), config.optimizer);
  s.opt_d = Adam(parameter_list(*s.discriminator), config.optimizer);
  s.latent_rng = at::make_generator<at::CPUGeneratorImpl>(derive_seed(config.seed, kLatentStream));
  s.augment_rng.seed(derive_seed(config.seed, kAugmentStream));
  s.ada.p = config.augment.p;
  s.ada.target_rt = config.augment.target_rt;
  s.ada.step_size = config.augment.step_size;
  s.ada.window = config.augment.window;
  return s;
}

double augment_probability(const TrainState& state) {
  return state.config.augment.enabled ? state.ada.p : 0.0;
}

LossReport d_step(TrainState& s, const Batch& real) {
  const auto& cfg = s.config;
  const auto batch = real.images.size(0);
  const auto t = cfg.net.guidance();
  auto& disc = s.discriminator;

  LossReport report;
  report.lambda_reg = cfg.lambda_reg;
  report.r1_gamma = cfg.r1_gamma;
  report.p_aug = augment_probability(s);

  const auto z = at::randn({batch, cfg.net.z_dim}, s.latent_rng);
  GeneratorOutput fake;
  {
    // The generator runs outside autograd: neither the fake image nor the
    // guidance map can carry gradient back into generator weights.
    torch::NoGradGuard no_grad;
    fake = s.generator->forward(z);
  }
  const bool ggdr_on = disc->has_decoder() && s.step >= cfg.ggdr_start_step;
  auto fake_images = fake.image;
  torch::Tensor guidance = ggdr_on ? fake.pyramid.at(t) : torch::Tensor();

  auto real_images = real.images;
  auto real_masks = real.masks;
  s.last_image_transform_ids.clear();
  s.last_feature_transform_ids.clear();
  if (cfg.augment.enabled) {
    const auto transforms = sample_transforms(s, batch);
    fake_images = apply_per_sample(transforms, fake_images);
    for (const auto& tr : transforms) s.last_image_transform_ids.push_back(tr.id);
    if (ggdr_on) {
      guidance = apply_per_sample(transforms, guidance);
      for (const auto& tr : transforms) s.last_feature_transform_ids.push_back(tr.id);
    }
    if (cfg.augment.augment_reals) {
      const auto real_transforms = sample_transforms(s, batch);
      real_images = apply_per_sample(real_transforms, real_images);
      if (cfg.aux_seg_mode && real_masks.defined()) {
        real_masks = transform_masks(real_transforms, real_masks, cfg.net.seg_classes);
      }
    }
  }

  const bool r1_step = cfg.r1_gamma > 0.0 && s.step % cfg.r1_interval == 0;
  const bool seg_on = cfg.aux_seg_mode && real_masks.defined();
  auto real_in = r1_step ? real_images.detach().requires_grad_(true) : real_images;
  const auto real_out = disc->forward(real_in, {.decoder = false, .segmentation = seg_on});
  const auto fake_out = disc->forward(fake_images, {.decoder = ggdr_on});

  auto adv = adv_loss_d(real_out.logit, fake_out.logit);
  auto loss = adv;
  report.adv_d = adv.item<double>();
  if (ggdr_on) {
    const auto g = cosine_distance(fake_out.decoder_maps.at(t), guidance);
    report.ggdr = g.item<double>();
    loss = loss + cfg.lambda_reg * g;
  }
  if (r1_step) {
    const auto r1 = r1_from_logits(real_out.logit, real_in, cfg.r1_gamma) *
                    static_cast<double>(cfg.r1_interval);
    report.r1 = r1.item<double>();
    loss = loss + r1;
  }
  if (seg_on) {
    const auto seg = aux_segmentation_loss(real_out.seg_logits, real_masks);
    report.aux_seg = seg.item<double>();
    loss = loss + cfg.aux_seg_weight * seg;
  }
  report.total_d = loss.item<double>();
  check_finite(report, s.step, "d_step");

  const auto params = parameter_list(*disc);
  s.opt_d.step(grads_or_zeros(loss, params));

  if (cfg.augment.enabled && cfg.augment.adaptive) {
    s.ada = ada_update(s.ada, real_out.logit.detach());
  }
  return report;
}

LossReport g_step(TrainState& s) {
  const auto& cfg = s.config;
  LossReport report;
  report.lambda_reg = cfg.lambda_reg;
  report.r1_gamma = cfg.r1_gamma;
  report.p_aug = augment_probability(s);

  const auto z = at::randn({cfg.batch_size, cfg.net.z_dim}, s.latent_rng);
  const auto fake = s.generator->forward(z);
  auto images = fake.image;
  if (cfg.augment.enabled) {
    images = apply_per_sample(sample_transforms(s, cfg.batch_size), images);
  }
  const auto out = s.discriminator->forward(images, {.decoder = false});
  const auto loss = adv_loss_g(out.logit);
  report.adv_g = loss.item<double>();
  report.total_g = report.adv_g;
  check_finite(report, s.step, "g_step");

  const auto params = parameter_list(*s.generator);
  s.opt_g.step(grads_or_zeros(loss, params));

  torch::NoGradGuard no_grad;
  const auto live = parameter_list(*s.generator);
  auto ema = parameter_list(*s.generator_ema);
  for (std::size_t i = 0; i < live.size(); ++i) {
    if (cfg.ema_enabled) {
      ema[i].copy_(live[i].lerp(ema[i], cfg.ema_decay));
    } else {
      ema[i].copy_(live[i]);
    }
  }
  return report;
}

BatchIterator make_train_iterator(const TrainState& state, const Dataset& dataset) {
  const auto& cfg = state.config;
  BatchIterator it(dataset, cfg.batch_size, derive_seed(cfg.seed, kDataStream),
                   cfg.data.horizontal_flip, /*drop_last=*/true);
  it.seek(state.data_epoch, state.data_position);
  return it;
}

torch::Tensor fixed_latents(const TrainConfig& config, std::int64_t n, std::uint64_t stream) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(
      derive_seed(config.seed, kSampleStream, stream));
  return at::randn({n, config.net.z_dim}, gen);
}

TrainResult train(TrainState& s, const Dataset& dataset, const fs::path& out_dir,
                  const TrainHooks& hooks) {
  const auto& cfg = s.config;
  if (dataset.size() == 0) throw ConfigError("training dataset is empty");
  if (dataset.images.size(1) != cfg.net.image_channels ||
      dataset.images.size(2) != cfg.net.image_size ||
      dataset.images.size(3) != cfg.net.image_size) {
    throw ConfigError("dataset images do not match the configured resolution");
  }
  if (cfg.aux_seg_mode && !dataset.has_masks()) {
    throw ConfigError("aux_seg_mode needs a dataset with label masks");
  }
  auto it = make_train_iterator(s, dataset);

  TrainResult result;
  std::ofstream csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const auto path = out_dir / "metrics.csv";
    const bool fresh = s.step == 0 || !fs::exists(path);
    csv.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw ConfigError("cannot write " + path.string());
    if (fresh) csv << kMetricsHeader << "\n";
  }

  const auto sample_z = fixed_latents(cfg, 64);
  while (s.step < cfg.total_steps) {
    const auto batch = it.next();
    auto report = d_step(s, batch);
    const auto g = g_step(s);
    report.adv_g = g.adv_g;
    report.total_g = g.total_g;
    s.step += 1;
    s.data_epoch = it.epoch();
    s.data_position = it.position();

    s.metrics.adv_d += report.adv_d;
    s.metrics.adv_g += report.adv_g;
    s.metrics.ggdr += report.ggdr;
    s.metrics.r1 += report.r1;
    s.metrics.count += 1;
    if (s.step % cfg.log_interval == 0) {
      const auto row = format_row(s.step, s.metrics, augment_probability(s));
      result.metric_rows.push_back(row);
      if (csv.is_open()) {
        csv << row << "\n";
        csv.flush();
      }
      log::debug("step " + std::to_string(s.step) + " " + row);
      s.metrics = {};
    }
    if (hooks.on_step) hooks.on_step(s, report);
    if (!out_dir.empty() && cfg.sample_interval > 0 && s.step % cfg.sample_interval == 0) {
      torch::NoGradGuard no_grad;
      const auto images = s.generator_ema->forward(sample_z).image;
      char name[64];
      std::snprintf(name, sizeof(name), "samples-%06lld.png", static_cast<long long>(s.step));
      write_png(out_dir / name, make_grid(images, 8));
    }
    if (!out_dir.empty() && cfg.ckpt_interval > 0 && s.step % cfg.ckpt_interval == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt-%06lld.ggdr", static_cast<long long>(s.step));
      checkpoint_save(s, out_dir / name);
      checkpoint_save(s, out_dir / "latest.ggdr");
    }
  }
  return result;
}

Archive state_to_archive(const TrainState& s) {
  Archive a;
  a.put("config", format_train_config(s.config));
  a.put_int("step", s.step);
  put_module(a, "g.", *s.generator);
  put_module(a, "d.", *s.discriminator);
  put_module(a, "g_ema.", *s.generator_ema);
  put_adam(a, "opt_g.", s.opt_g, *s.generator);
  put_adam(a, "opt_d.", s.opt_d, *s.discriminator);
  {
    auto gen = s.latent_rng;
    std::lock_guard<std::mutex> lock(gen.mutex());
    a.put("rng.latent", gen.get_state());
  }
  a.put("rng.augment", serialize_engine(s.augment_rng));
  a.put_double("ada.p", s.ada.p);
  a.put_double("ada.sign_sum", s.ada.sign_sum);
  a.put_int("ada.sign_count", s.ada.sign_count);
  a.put_int("ada.batches", s.ada.batches);
  a.put_double("ada.last_rt", s.ada.last_rt);
  a.put_int("data.epoch", s.data_epoch);
  a.put_int("data.position", s.data_position);
  a.put_double("metrics.adv_d", s.metrics.adv_d);
  a.put_double("metrics.adv_g", s.metrics.adv_g);
  a.put_double("metrics.ggdr", s.metrics.ggdr);
  a.put_double("metrics.r1", s.metrics.r1);
  a.put_int("metrics.count", s.metrics.count);
  return a;
}

TrainState state_from_archive(const Archive& a, const TrainConfig* expected) {
  std::istringstream cfg_text(a.string("config"));
  TrainConfig stored;
  try {
    stored = train_config_from(parse_key_values(cfg_text));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("stored config is invalid: ") + e.what());
  }
  TrainConfig config = stored;
  if (expected != nullptr) {
    const auto want = train_config_to_kv(*expected);
    const auto have = train_config_to_kv(stored);
    std::vector<std::string> diffs;
    for (const auto& [k, v] : want) {
      if (k == "total_steps" || k == "log_interval" || k == "ckpt_interval" ||
          k == "sample_interval" || k == "data.path") {
        continue;
      }
      const auto it = have.find(k);
      if (it == have.end() || it->second != v) {
        diffs.push_back(k + " (checkpoint: " + (it == have.end() ? "<missing>" : it->second) +
                        ", requested: " + v + ")");
      }
    }
    if (!diffs.empty()) {
      std::string msg = "checkpoint is incompatible with the requested config:";
      for (const auto& d : diffs) msg += "\n  " + d;
      throw CheckpointError(msg);
    }
    config = *expected;
  }
  TrainState s = init_train_state(config);
  s.step = a.integer("step");
  load_module(a, "g.", *s.generator);
  load_module(a, "d.", *s.discriminator);
  load_module(a, "g_ema.", *s.generator_ema);
  load_adam(a, "opt_g.", s.opt_g, *s.generator);
  load_adam(a, "opt_d.", s.opt_d, *s.discriminator);
  {
    std::lock_guard<std::mutex> lock(s.latent_rng.mutex());
    s.latent_rng.set_state(a.tensor("rng.latent"));
  }
  deserialize_engine(s.augment_rng, a.string("rng.augment"));
  s.ada.p = a.real("ada.p");
  s.ada.sign_sum = a.real("ada.sign_sum");
  s.ada.sign_count = a.integer("ada.sign_count");
  s.ada.batches = a.integer("ada.batches");
  s.ada.last_rt = a.real("ada.last_rt");
  s.data_epoch = a.integer("data.epoch");
  s.data_position = a.integer("data.position");
  s.metrics.adv_d = a.real("metrics.adv_d");
  s.metrics.adv_g = a.real("metrics.adv_g");
  s.metrics.ggdr = a.real("metrics.ggdr");
  s.metrics.r1 = a.real("metrics.r1");
  s.metrics.count = a.integer("metrics.count");
  return s;
}

void checkpoint_save(const TrainState& state, const fs::path& path) {
  state_to_archive(state).save(path);
}

TrainState checkpoint_load(const fs::path& path, const TrainConfig* expected) {
  return state_from_archive(Archive::load(path), expected);
}

std::vector<torch::Tensor> snapshot_parameters(const torch::nn::Module& net) {
  std::vector<torch::Tensor> out;
  for (const auto& p : net.parameters(true)) out.push_back(p.detach().clone());
  return out;
}

bool parameters_equal(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!torch::equal(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace ggdr
