// Acceptance runner: prints one PASS/FAIL line per criterion.
//
//   ggdr_acceptance --fast                  criteria 1-8 and 11 (minutes)
//   ggdr_acceptance --smoke --workdir DIR   criteria 9 and 10 (hours on CPU)
//
// The smoke experiments keep their checkpoints in DIR and resume from them,
// so an interrupted run continues where it stopped.

#include <CLI11.hpp>
#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ggdr/analysis.hpp"
#include "ggdr/augment.hpp"
#include "ggdr/errors.hpp"
#include "ggdr/eval.hpp"
#include "ggdr/log.hpp"
#include "ggdr/losses.hpp"
#include "ggdr/nets.hpp"
#include "ggdr/train.hpp"
#include "reference_trainer.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace ggdr;
using ggdr::testing::cosine_distance_oracle;
using ggdr::testing::finite_difference;
using ggdr::testing::relative_error;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string num(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int report(int id, const std::string& title, const std::function<Outcome()>& body) {
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.pass = false;
    out.notes.push_back(std::string("exception: ") + e.what());
  }
  std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << title << ")";
  for (std::size_t i = 0; i < out.notes.size(); ++i) std::cout << (i == 0 ? ": " : "; ") << out.notes[i];
  std::cout << std::endl;
  return out.pass ? 0 : 1;
}

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

bool close(double got, double want, double tol = 1e-6) { return std::abs(got - want) <= tol; }

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

torch::Tensor scalar_logits(double v, int n = 4) { return torch::full({n}, v, kF64); }

// ---------------------------------------------------------------- criterion 1

Outcome loss_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  const double ln2 = std::log(2.0);

  o.check(close(adv_loss_d(scalar_logits(0), scalar_logits(0)).item<double>(), 2 * ln2), "adv_d(0,0) = 2 ln 2");
  o.check(close(adv_loss_d(scalar_logits(1e4), scalar_logits(-1e4)).item<double>(), 0.0), "adv_d perfect limit");
  o.check(close(adv_loss_d(scalar_logits(1), scalar_logits(-1)).item<double>(), 2 * softplus(-1)),
          "adv_d(1,-1) = 2 softplus(-1)");
  o.check(close(adv_loss_g(scalar_logits(0)).item<double>(), ln2), "adv_g(0) = ln 2");
  o.check(close(adv_loss_g(scalar_logits(1e4)).item<double>(), 0.0), "adv_g limit");
  o.check(close(adv_loss_g(scalar_logits(-2)).item<double>(), softplus(2)), "adv_g(-2) = softplus(2)");

  torch::manual_seed(1);
  const auto t = torch::randn({2, 6, 8, 8}, kF64);
  o.check(close(cosine_distance(t, t).item<double>(), 0.0), "cos(t,t) = 0");
  o.check(close(cosine_distance(-t, t).item<double>(), 2.0), "cos(-t,t) = 2");
  o.check(close(cosine_distance(2 * t, t).item<double>(), 0.0), "cos(2t,t) = 0");
  auto e1 = torch::zeros({2, 2, 4, 4}, kF64);
  auto e2 = torch::zeros({2, 2, 4, 4}, kF64);
  e1.select(1, 0).fill_(1.0);
  e2.select(1, 1).fill_(1.0);
  o.check(close(cosine_distance(e1, e2).item<double>(), 1.0), "orthogonal = 1");
  const auto p = torch::randn({2, 6, 8, 8}, kF64);
  const double diff = std::abs(cosine_distance(p, t).item<double>() - cosine_distance_oracle(p, t));
  o.check(diff <= 1e-6, "cosine oracle agreement (|diff| = " + num(diff) + ")");

  GeneratorOutput gout;
  gout.pyramid[8] = t;
  DiscriminatorOutput dout;
  dout.decoder_maps[8] = t.clone();
  o.check(close(ggdr_loss(dout, gout, 8).item<double>(), 0.0), "ggdr(equal maps) = 0");
  dout.decoder_maps[8] = p;
  o.check(close(ggdr_loss(dout, gout, 8).item<double>(), cosine_distance_oracle(p, t)), "ggdr oracle");

  auto x = torch::randn({3, 2}, kF64).requires_grad_(true);
  const auto w = torch::tensor({3.0, 4.0}, kF64);
  o.check(close(r1_from_logits(x.matmul(w), x, 2.0).item<double>(), 25.0), "R1 linear = 25");
  auto xc = torch::randn({3, 2}, kF64).requires_grad_(true);
  o.check(close(r1_from_logits(xc.sum(1) * 0.0 + 1.0, xc, 2.0).item<double>(), 0.0), "R1 constant = 0");

  const auto labels = torch::randint(0, 5, {2, 3, 3}, torch::kInt64);
  const auto onehot = torch::one_hot(labels, 5).permute({0, 3, 1, 2}).to(torch::kFloat64) * 100.0;
  o.check(close(aux_segmentation_loss(onehot, labels).item<double>(), 0.0), "aux-seg one-hot = 0");
  o.check(close(aux_segmentation_loss(torch::zeros({2, 5, 3, 3}, kF64), labels).item<double>(), std::log(5.0)),
          "aux-seg uniform = ln 5");
  const auto logits = torch::randn({1, 3, 2, 2}, kF64);
  const auto lab = torch::tensor({0, 2, 1, 1}, torch::kInt64).view({1, 2, 2});
  double hand = 0.0;
  for (int y = 0; y < 2; ++y) {
    for (int xx = 0; xx < 2; ++xx) {
      double z = 0.0;
      for (int c = 0; c < 3; ++c) z += std::exp(logits[0][c][y][xx].item<double>());
      hand += std::log(z) - logits[0][lab[0][y][xx].item<std::int64_t>()][y][xx].item<double>();
    }
  }
  o.check(close(aux_segmentation_loss(logits, lab).item<double>(), hand / 4.0), "aux-seg hand CE");

  o.check(close(total_d_loss(1.0, 0.1, 10.0, 0.0), 2.0), "total(1,0.1,10,0) = 2");
  o.check(close(total_d_loss(0.7, 0.0, 10.0, 0.0), 0.7), "total degenerates to adv_d");
  o.check(close(total_d_loss(1.386, 2.0, 10.0, 0.5), 21.886), "total(1.386,2,10,0.5) = 21.886");

  const double secs = seconds_since(t0);
  o.check(secs < 60.0, "runtime under 1 min");
  o.note("runtime " + num(secs, 3) + " s");
  return o;
}

// ---------------------------------------------------------------- criterion 2

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  auto cfg = ggdr::testing::tiny_net();
  cfg.seg_classes = 3;
  auto gen = build_generator(cfg, 21);
  auto disc = build_discriminator(cfg, 22);
  gen->to(torch::kFloat64);
  disc->to(torch::kFloat64);
  o.check(count_params(*gen) < 1000 && count_params(*disc) < 1000, "nets under 1000 parameters");
  o.note("params G=" + std::to_string(count_params(*gen)) + " D=" + std::to_string(count_params(*disc)));
  torch::manual_seed(23);
  const auto real = torch::rand({2, 3, 8, 8}, kF64) * 2.0 - 1.0;
  const auto z = torch::randn({2, cfg.z_dim}, kF64);
  const auto labels = torch::randint(0, 3, {2, 8, 8}, torch::kInt64);
  GeneratorOutput fake;
  {
    torch::NoGradGuard ng;
    fake = gen->forward(z);
  }

  auto check = [&](const std::string& name, const std::function<torch::Tensor()>& loss_fn,
                   const std::vector<torch::Tensor>& params) {
    auto analytic = torch::autograd::grad({loss_fn()}, params, {}, false, false, true);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      if (!analytic[i].defined()) analytic[i] = torch::zeros_like(params[i]);
    }
    const auto numeric = finite_difference([&] { return loss_fn().item<double>(); }, params);
    const double err = relative_error(analytic, numeric);
    o.check(err < 1e-4, name + " rel err " + num(err));
    o.note(name + " " + num(err, 2));
  };
  check("adv_d", [&] {
    return adv_loss_d(disc->forward(real, {.decoder = false}).logit, disc->forward(fake.image, {.decoder = false}).logit);
  }, disc->parameters());
  check("adv_g", [&] { return adv_loss_g(disc->forward(gen->forward(z).image, {.decoder = false}).logit); },
        gen->parameters());
  check("cosine", [&] { return ggdr_loss(disc->forward(fake.image), fake, cfg.guidance()); }, disc->parameters());
  check("r1", [&] { return r1_penalty(disc, real, 1.0); }, disc->parameters());
  check("aux_seg", [&] {
    return aux_segmentation_loss(disc->forward(real, {.decoder = false, .segmentation = true}).seg_logits, labels);
  }, disc->parameters());

  const double secs = seconds_since(t0);
  o.check(secs < 300.0, "runtime under 5 min");
  o.note("runtime " + num(secs, 3) + " s");
  return o;
}

// ---------------------------------------------------------------- criterion 3

Outcome stop_gradient() {
  Outcome o;
  auto cfg = ggdr::testing::small_train_config();
  auto state = init_train_state(cfg);

  const auto z = fixed_latents(cfg, 4);
  const auto gout = state.generator->forward(z);
  const auto dout = state.discriminator->forward(gout.image.detach());
  const auto loss = ggdr_loss(dout, gout, cfg.net.guidance());
  const auto gparams = state.generator->parameters();
  const auto grads = torch::autograd::grad({loss}, gparams, {}, true, false, true);
  bool all_zero = true;
  for (const auto& g : grads) all_zero = all_zero && (!g.defined() || g.count_nonzero().item<std::int64_t>() == 0);
  o.check(all_zero, "d ggdr / d theta_G exactly zero");
  const auto dgrads = torch::autograd::grad({loss}, state.discriminator->parameters(), {}, false, false, true);
  bool any_d = false;
  for (const auto& g : dgrads) any_d = any_d || (g.defined() && g.count_nonzero().item<std::int64_t>() > 0);
  o.check(any_d, "discriminator does receive ggdr gradient");

  const auto ds = load_dataset(cfg.data);
  auto it = make_train_iterator(state, ds);
  int steps = 0;
  for (; steps < 5; ++steps) {
    const auto g0 = snapshot_parameters(*state.generator);
    d_step(state, it.next());
    o.check(parameters_equal(g0, snapshot_parameters(*state.generator)), "G bit-identical across d_step");
    const auto d0 = snapshot_parameters(*state.discriminator);
    g_step(state);
    o.check(parameters_equal(d0, snapshot_parameters(*state.discriminator)), "D bit-identical across g_step");
    state.step += 1;
  }
  o.note(std::to_string(steps) + " step pairs checked");
  return o;
}

// ---------------------------------------------------------------- criterion 4

Outcome baseline_degeneration() {
  Outcome o;
  auto cfg = ggdr::testing::small_train_config();
  cfg.lambda_reg = 0.0;
  cfg.augment.enabled = false;
  cfg.r1_interval = 4;
  cfg.total_steps = 100;
  const auto ds = load_dataset(cfg.data);
  auto state = init_train_state(cfg);
  ggdr::testing::ReferenceTrainer reference(cfg, ds);
  auto it = make_train_iterator(state, ds);
  int first_diff = -1;
  for (int step = 0; step < cfg.total_steps; ++step) {
    d_step(state, it.next());
    g_step(state);
    state.step += 1;
    reference.step();
    const bool same = parameters_equal(snapshot_parameters(*state.discriminator),
                                       snapshot_parameters(*reference.discriminator())) &&
                      parameters_equal(snapshot_parameters(*state.generator),
                                       snapshot_parameters(*reference.generator()));
    if (!same && first_diff < 0) first_diff = step;
  }
  o.check(first_diff < 0, "trajectories diverge at step " + std::to_string(first_diff));
  o.note("100 steps, G and D parameters compared bit-exactly after every step");
  return o;
}

// ---------------------------------------------------------------- criterion 5

Outcome fid_closed_forms() {
  Outcome o;
  for (const int d : {1, 4, 16}) {
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd e1 = zero;
    e1(0) = 1.0;
    const double same = fid({zero, eye}, {zero, eye});
    const double shift = fid({zero, eye}, {e1, eye});
    const double scale = fid({zero, eye}, {zero, 4.0 * eye});
    o.check(close(same, 0.0), "identical -> 0 (d=" + std::to_string(d) + ")");
    o.check(close(shift, 1.0), "unit shift -> 1 (d=" + std::to_string(d) + ")");
    o.check(close(scale, d), "I vs 4I -> d (d=" + std::to_string(d) + ", got " + num(scale, 12) + ")");
  }
  o.note("d in {1, 4, 16}, tolerance 1e-6");
  return o;
}

// ---------------------------------------------------------------- criterion 6

PrecisionRecall brute_force_pr(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, int k) {
  auto radii = [k](const Eigen::MatrixXd& s) {
    std::vector<double> r(s.rows());
    for (int i = 0; i < s.rows(); ++i) {
      std::vector<double> d;
      for (int j = 0; j < s.rows(); ++j)
        if (j != i) d.push_back((s.row(i) - s.row(j)).norm());
      std::sort(d.begin(), d.end());
      r[i] = d[k - 1];
    }
    return r;
  };
  auto covered = [](const Eigen::MatrixXd& q, const Eigen::MatrixXd& ref, const std::vector<double>& r) {
    int hits = 0;
    for (int i = 0; i < q.rows(); ++i) {
      for (int j = 0; j < ref.rows(); ++j) {
        if ((q.row(i) - ref.row(j)).norm() <= r[j]) {
          ++hits;
          break;
        }
      }
    }
    return hits / static_cast<double>(q.rows());
  };
  return {covered(fake, real, radii(real)), covered(real, fake, radii(fake))};
}

Outcome precision_recall_checks() {
  Outcome o;
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto sample = [&](int n, int d, double offset) {
    Eigen::MatrixXd m(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = nd(rng) + offset;
    return m;
  };
  const auto a = sample(50, 8, 0.0);
  const auto same = precision_recall(a, a, 3);
  o.check(same.precision == 1.0 && same.recall == 1.0, "identical sets -> (1, 1)");
  const auto b = sample(45, 8, 500.0);
  const auto far = precision_recall(a, b, 3);
  const auto oracle = brute_force_pr(a, b, 3);
  o.check(oracle.precision == 0.0 && oracle.recall == 0.0, "oracle sees (0, 0)");
  o.check(far.precision == oracle.precision && far.recall == oracle.recall, "far clusters match oracle");
  o.note("identical (" + num(same.precision) + ", " + num(same.recall) + "), far (" + num(far.precision) + ", " +
         num(far.recall) + "), n <= 50");
  return o;
}

// ---------------------------------------------------------------- criterion 7

Outcome parameter_overhead() {
  Outcome o;
  for (const std::int64_t size : {32, 64}) {
    NetConfig with;
    with.image_size = size;
    NetConfig without = with;
    without.use_decoder = false;
    const double total = static_cast<double>(count_params(*build_discriminator(with, 0)));
    const double base = static_cast<double>(count_params(*build_discriminator(without, 0)));
    const double overhead = (total - base) / base;
    o.check(overhead <= 0.08, std::to_string(size) + " px overhead " + num(100 * overhead, 3) + "%");
    o.note(std::to_string(size) + " px: +" + num(100 * overhead, 3) + "%");
  }
  return o;
}

// ---------------------------------------------------------------- criterion 8

torch::Tensor smooth_image(std::int64_t size) {
  const auto c = (torch::arange(size, kF64) + 0.5) / static_cast<double>(size);
  const auto yy = c.view({size, 1}).expand({size, size});
  const auto xx = c.view({1, size}).expand({size, size});
  std::vector<torch::Tensor> planes;
  for (int ch = 0; ch < 3; ++ch) {
    const double ph = 0.9 * ch;
    planes.push_back(0.6 * torch::sin(2 * std::numbers::pi * xx + ph) * torch::cos(2 * std::numbers::pi * yy - ph) +
                     0.3 * torch::cos(2 * std::numbers::pi * (xx - yy) + ph));
  }
  return torch::stack(planes).unsqueeze(0).to(torch::kFloat32);
}

Outcome augmentation_consistency() {
  Outcome o;
  const auto img = smooth_image(32);
  std::mt19937_64 rng(8);
  AugmentRanges ranges;
  ranges.image_size = 32;
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto t = sample_transform(rng, 0.75, ranges);
    for (const std::int64_t f : {2, 4}) {
      const auto a = at::avg_pool2d(apply_to_image(t, img), {f, f});
      const auto b = apply_to_feature_map(t, at::avg_pool2d(img, {f, f}));
      worst = std::max(worst, (a - b).abs().mean().item<double>());
    }
  }
  o.check(worst < 0.05, "geometric commutation MAE " + num(worst));
  const auto noise = torch::randint(0, 256, {2, 3, 32, 32}).to(torch::kFloat32) / 256.0;
  bool exact = true;
  for (int flip = 0; flip < 2; ++flip) {
    for (int k = 0; k < 4; ++k) {
      GeometricTransform t;
      t.flip = flip == 1;
      t.quarter_turns = k;
      for (const std::int64_t f : {1, 2, 4, 8}) {
        exact = exact && torch::equal(at::avg_pool2d(apply_to_image(t, noise), {f, f}),
                                      apply_to_feature_map(t, at::avg_pool2d(noise, {f, f})));
      }
    }
  }
  o.check(exact, "flips and rotations commute exactly");
  o.note("worst MAE over 200 transforms " + num(worst, 3) + "; flips/rotations exact on noise");
  return o;
}

// --------------------------------------------------------------- criterion 11

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const fs::path& scratch) {
  Outcome o;
  auto cfg = ggdr::testing::small_train_config();
  cfg.total_steps = 24;
  cfg.r1_interval = 4;
  cfg.log_interval = 3;
  cfg.augment.enabled = true;
  cfg.augment.adaptive = true;
  cfg.augment.p = 0.2;
  cfg.augment.step_size = 0.05;
  cfg.augment.window = 2;
  cfg.data.horizontal_flip = true;
  const auto ds = load_dataset(cfg.data);

  const auto run_a = scratch / "run-a";
  const auto run_b = scratch / "run-b";
  const auto run_c = scratch / "run-c";
  for (const auto& d : {run_a, run_b, run_c}) {
    fs::remove_all(d);
    fs::create_directories(d);
  }
  auto a = init_train_state(cfg);
  train(a, ds, run_a);
  checkpoint_save(a, run_a / "final.ggdr");
  auto b = init_train_state(cfg);
  train(b, ds, run_b);
  checkpoint_save(b, run_b / "final.ggdr");
  o.check(file_bytes(run_a / "metrics.csv") == file_bytes(run_b / "metrics.csv"), "metrics.csv identical");
  o.check(file_bytes(run_a / "final.ggdr") == file_bytes(run_b / "final.ggdr"), "checkpoints identical");

  auto first = cfg;
  first.total_steps = 11;
  auto c = init_train_state(first);
  train(c, ds, run_c);
  checkpoint_save(c, run_c / "mid.ggdr");
  auto resumed = checkpoint_load(run_c / "mid.ggdr", &cfg);
  train(resumed, ds, run_c);
  checkpoint_save(resumed, run_c / "final.ggdr");
  o.check(file_bytes(run_a / "final.ggdr") == file_bytes(run_c / "final.ggdr"), "resumed checkpoint identical");
  o.check(file_bytes(run_a / "metrics.csv") == file_bytes(run_c / "metrics.csv"), "resumed metrics.csv identical");
  o.note("24 steps with adaptive augmentation, lazy R1 and flips; resume at step 11");
  return o;
}

// ----------------------------------------------------------- criteria 9, 10

struct SmokeRun {
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double fid = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double probe = 0.0;
};

TrainConfig smoke_config(const fs::path& config_file, std::uint64_t seed, double lambda) {
  auto cfg = load_train_config(config_file);
  cfg.seed = seed;
  cfg.lambda_reg = lambda;
  cfg.net.base_channels = 8;
  cfg.net.channel_max = 64;
  cfg.ckpt_interval = 2000;
  cfg.sample_interval = 5000;
  cfg.log_interval = 500;
  cfg.validate();
  return cfg;
}

TrainState train_or_resume(const TrainConfig& cfg, const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  if (fs::exists(dir / "final.ggdr")) return checkpoint_load(dir / "final.ggdr", &cfg);
  TrainState state = fs::exists(dir / "latest.ggdr") ? checkpoint_load(dir / "latest.ggdr", &cfg)
                                                      : init_train_state(cfg);
  log::info(dir.filename().string() + ": training from step " + std::to_string(state.step));
  const auto t0 = std::chrono::steady_clock::now();
  train(state, ds, dir);
  log::info(dir.filename().string() + ": done in " + num(seconds_since(t0), 4) + " s");
  checkpoint_save(state, dir / "final.ggdr");
  return state;
}

std::vector<SmokeRun> smoke_runs(const fs::path& workdir, const fs::path& config_file) {
  fs::create_directories(workdir);
  const auto base_cfg = smoke_config(config_file, 0, 0.0);
  const auto ds = load_dataset(base_cfg.data);

  DatasetSpec probe_spec;
  probe_spec.source = DataSource::kSyntheticShapes;
  probe_spec.resolution = base_cfg.data.resolution;
  probe_spec.synthetic_count = 1000;
  probe_spec.synthetic_seed = 99;
  probe_spec.label_masks = true;
  const auto probe_data = load_dataset(probe_spec);
  const auto probe_labels = downsample_labels(probe_data.masks, 16);

  const RandomConvExtractor extractor(0);
  std::vector<SmokeRun> runs;
  std::ofstream summary(workdir / "summary.csv");
  summary << "seed,lambda_reg,step,extractor,fid,precision,recall,probe_accuracy\n";
  for (const std::uint64_t seed : {0, 1, 2}) {
    for (const double lambda : {0.0, 10.0}) {
      const auto cfg = smoke_config(config_file, seed, lambda);
      const auto dir = workdir / ("seed" + std::to_string(seed) + "-lambda" + num(lambda));
      auto state = train_or_resume(cfg, ds, dir);

      EvalRequest req;
      req.n_fake = 10000;
      req.seed = 1234;
      const auto m = evaluate(state.generator_ema, ds.images, extractor, req);
      const auto feats = encoder_features(state.discriminator, probe_data.images, 16);
      ProbeOptions popts;
      popts.seed = seed;
      const auto probe = linear_probe(feats, probe_labels, kShapeClasses, 200, popts);

      SmokeRun r{seed, lambda, *m.fid, *m.precision, *m.recall, probe.accuracy};
      runs.push_back(r);
      summary << seed << "," << lambda << "," << state.step << "," << m.extractor_tag << "," << num(r.fid, 8)
              << "," << num(r.precision, 6) << "," << num(r.recall, 6) << "," << num(r.probe, 6) << "\n";
      summary.flush();
      log::info(dir.filename().string() + ": fid " + num(r.fid) + " recall " + num(r.recall) + " probe " +
                num(r.probe));
    }
  }
  return runs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GGDR acceptance criteria"};
  bool fast = false, smoke = false;
  fs::path workdir = fs::temp_directory_path() / "ggdr-acceptance";
  fs::path config_file = GGDR_SMOKE_CONFIG;
  std::string level = "info";
  app.add_flag("--fast", fast, "Run criteria 1-8 and 11");
  app.add_flag("--smoke", smoke, "Run the training experiments (criteria 9 and 10)");
  app.add_option("--workdir", workdir, "Directory for experiment outputs");
  app.add_option("--config", config_file, "Training config of the smoke runs");
  app.add_option("--log-level", level, "Log level");
  CLI11_PARSE(app, argc, argv);
  if (!fast && !smoke) fast = smoke = true;
  log::set_level(level);
  torch::set_num_threads(1);

  int failures = 0;
  if (fast) {
    const auto scratch = fs::temp_directory_path() / "ggdr-acceptance-fast";
    fs::create_directories(scratch);
    failures += report(1, "loss oracles", loss_oracles);
    failures += report(2, "gradient suite", gradient_suite);
    failures += report(3, "stop-gradient contract", stop_gradient);
    failures += report(4, "baseline degeneration", baseline_degeneration);
    failures += report(5, "FID closed forms", fid_closed_forms);
    failures += report(6, "precision/recall", precision_recall_checks);
    failures += report(7, "decoder parameter overhead", parameter_overhead);
    failures += report(8, "augmentation consistency", augmentation_consistency);
    failures += report(11, "determinism and resume", [&] { return determinism(scratch); });
  }
  if (smoke) {
    std::vector<SmokeRun> runs;
    std::string error;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      runs = smoke_runs(workdir, config_file);
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double hours = seconds_since(t0) / 3600.0;
    auto pairs = [&](const std::function<bool(const SmokeRun&, const SmokeRun&)>& better) {
      int wins = 0;
      for (std::size_t i = 0; i + 1 < runs.size(); i += 2) wins += better(runs[i + 1], runs[i]) ? 1 : 0;
      return wins;
    };
    auto detail = [&](const std::function<double(const SmokeRun&)>& get) {
      std::string s;
      for (std::size_t i = 0; i + 1 < runs.size(); i += 2) {
        s += (i ? ", " : "") + std::string("seed ") + std::to_string(runs[i].seed) + " " + num(get(runs[i]), 4) +
             " -> " + num(get(runs[i + 1]), 4);
      }
      return s;
    };
    failures += report(9, "desk-scale directional smoke", [&] {
      Outcome o;
      o.check(error.empty(), error);
      o.check(runs.size() == 6, "six runs completed");
      const int fid_wins = pairs([](const SmokeRun& g, const SmokeRun& b) { return g.fid < b.fid; });
      const int rec_wins = pairs([](const SmokeRun& g, const SmokeRun& b) { return g.recall > b.recall; });
      o.check(fid_wins >= 2, "lambda=10 lower desk-FID in " + std::to_string(fid_wins) + "/3 seeds");
      o.check(rec_wins >= 2, "lambda=10 higher desk-recall in " + std::to_string(rec_wins) + "/3 seeds");
      o.note("FID wins " + std::to_string(fid_wins) + "/3 [" + detail([](const SmokeRun& r) { return r.fid; }) + "]");
      o.note("recall wins " + std::to_string(rec_wins) + "/3 [" +
             detail([](const SmokeRun& r) { return r.recall; }) + "]");
      o.note("wall time this invocation " + num(hours, 3) + " h");
      return o;
    });
    failures += report(10, "probe directional check", [&] {
      Outcome o;
      o.check(error.empty(), error);
      o.check(runs.size() == 6, "six runs completed");
      const int wins = pairs([](const SmokeRun& g, const SmokeRun& b) { return g.probe > b.probe; });
      o.check(wins >= 2, "GGDR encoder better in " + std::to_string(wins) + "/3 seeds");
      o.note("wins " + std::to_string(wins) + "/3 [" + detail([](const SmokeRun& r) { return r.probe; }) + "]");
      return o;
    });
  }
  return failures == 0 ? 0 : 1;
}
