// ggdr command-line front end: train, eval, visualize, probe, make-shapes.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ggdr/analysis.hpp"
#include "ggdr/errors.hpp"
#include "ggdr/eval.hpp"
#include "ggdr/log.hpp"
#include "ggdr/png_io.hpp"
#include "ggdr/train.hpp"

namespace fs = std::filesystem;
using namespace ggdr;

namespace {

struct DataArgs {
  std::string data;
  std::uint64_t synthetic_seed = 0;
  bool synthetic_seed_set = false;
  std::int64_t synthetic_n = 0;
};

void add_data_options(CLI::App* cmd, DataArgs& args) {
  cmd->add_option("--data", args.data,
                  "Image folder, packed file, or 'synthetic' (default: the training data)");
  cmd->add_option("--synthetic-n", args.synthetic_n, "Image count for synthetic data");
  cmd->add_option_function<std::uint64_t>(
      "--synthetic-seed",
      [&args](const std::uint64_t& v) {
        args.synthetic_seed = v;
        args.synthetic_seed_set = true;
      },
      "Seed for synthetic data");
}

DatasetSpec resolve_data(const DataArgs& args, const TrainConfig& config, bool masks) {
  DatasetSpec spec = config.data;
  if (args.data == "synthetic") {
    spec.source = DataSource::kSyntheticShapes;
  } else if (!args.data.empty()) {
    spec.path = args.data;
    spec.source = fs::is_directory(spec.path) ? DataSource::kImageFolder : DataSource::kPackedArray;
  }
  if (args.synthetic_seed_set) spec.synthetic_seed = args.synthetic_seed;
  if (args.synthetic_n > 0) spec.synthetic_count = args.synthetic_n;
  spec.label_masks = spec.label_masks || masks;
  spec.horizontal_flip = false;
  return spec;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

void append_csv(const fs::path& path, const std::string& header, const std::string& row) {
  const bool fresh = !fs::exists(path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigError("cannot write " + path.string());
  if (fresh) out << header << "\n";
  out << row << "\n";
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int run_train(const std::string& config_path, const fs::path& out_dir, const std::string& resume,
              const std::vector<std::string>& overrides) {
  auto kv = read_key_values(config_path);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    kv[o.substr(0, eq)] = o.substr(eq + 1);
  }
  const auto config = train_config_from(kv);
  fs::create_directories(out_dir);
  {
    std::ofstream(out_dir / "config.txt") << format_train_config(config);
  }
  auto state = resume.empty() ? init_train_state(config) : checkpoint_load(resume, &config);
  state.config.total_steps = config.total_steps;
  state.config.log_interval = config.log_interval;
  state.config.ckpt_interval = config.ckpt_interval;
  state.config.sample_interval = config.sample_interval;

  const auto dataset = load_dataset(config.data);
  log::info("training on " + std::to_string(dataset.size()) + " images from step " +
            std::to_string(state.step) + " to " + std::to_string(config.total_steps));
  const auto start = std::chrono::steady_clock::now();
  TrainHooks hooks;
  hooks.on_step = [&](const TrainState& s, const LossReport& r) {
    if (s.step % config.log_interval != 0) return;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log::info("step " + std::to_string(s.step) + "  adv_d " + fmt(r.adv_d) + "  adv_g " +
              fmt(r.adv_g) + "  ggdr " + fmt(r.ggdr) + "  p " + fmt(r.p_aug) + "  " +
              fmt(secs) + "s");
  };
  train(state, dataset, out_dir, hooks);
  checkpoint_save(state, out_dir / "final.ggdr");
  return 0;
}

int run_eval(const fs::path& ckpt, const DataArgs& data_args, const std::string& metrics,
             std::int64_t n, std::uint64_t seed, const fs::path& csv_arg,
             std::uint64_t extractor_seed, std::int64_t classifier_steps) {
  EvalRequest req;
  req.fid = req.precision_recall = req.inception_score = false;
  for (const auto& m : split_csv(metrics)) {
    if (m == "fid") req.fid = true;
    else if (m == "pr") req.precision_recall = true;
    else if (m == "is") req.inception_score = true;
    else throw ConfigError("unknown metric '" + m + "' (expected fid, pr, is)");
  }
  req.n_fake = n;
  req.seed = seed;
  auto state = checkpoint_load(ckpt);
  const auto dataset = load_dataset(resolve_data(data_args, state.config, req.inception_score));
  const RandomConvExtractor extractor(extractor_seed, state.config.net.image_channels);

  std::optional<TinyClassifier> classifier;
  if (req.inception_score) {
    if (!dataset.has_masks()) throw ConfigError("Inception Score needs a dataset with masks");
    classifier.emplace(state.config.net.image_channels, kShapeClasses - 1, extractor_seed);
    classifier->fit(dataset.images, dominant_shape_labels(dataset.masks), classifier_steps);
  }
  const auto result = evaluate(state.generator_ema, dataset.images, extractor, req,
                               classifier ? &*classifier : nullptr);
  const auto csv = csv_arg.empty() ? ckpt.parent_path() / "eval.csv" : csv_arg;
  const std::string row = ckpt.string() + "," + std::to_string(state.step) + "," +
                          result.extractor_tag + "," + std::to_string(result.n_real) + "," +
                          std::to_string(result.n_fake) + "," + std::to_string(seed) + "," +
                          fmt_opt(result.fid) + "," + fmt_opt(result.precision) + "," +
                          fmt_opt(result.recall) + "," + fmt_opt(result.inception_score);
  append_csv(csv, "ckpt,step,extractor,n_real,n_fake,seed,fid,precision,recall,is", row);
  std::cout << "fid=" << fmt_opt(result.fid) << " precision=" << fmt_opt(result.precision)
            << " recall=" << fmt_opt(result.recall) << " is=" << fmt_opt(result.inception_score)
            << " extractor=" << result.extractor_tag << "\n";
  return 0;
}

int run_visualize(const fs::path& ckpt, std::int64_t layer, int k, std::uint64_t seed,
                  const fs::path& out, const std::string& source, std::int64_t n, int tile,
                  bool standardize) {
  auto state = checkpoint_load(ckpt);
  torch::NoGradGuard no_grad;
  const auto z = fixed_latents(state.config, n, seed);
  const auto gen_out = state.generator_ema->forward(z);
  torch::Tensor fmap;
  if (source == "generator") {
    if (!gen_out.pyramid.contains(layer)) throw ConfigError("generator has no layer " + std::to_string(layer));
    fmap = gen_out.pyramid.at(layer);
  } else {
    const auto d_out = state.discriminator->forward(gen_out.image, {.decoder = true});
    const auto& maps = source == "decoder" ? d_out.decoder_maps : d_out.encoder_maps;
    if (!maps.contains(layer)) {
      throw ConfigError("discriminator " + source + " has no layer " + std::to_string(layer));
    }
    fmap = maps.at(layer);
  }
  KMeansOptions opts;
  opts.standardize = standardize;
  const auto clusters = kmeans_features(fmap, k, seed, opts);
  const auto grid = render_overlay_grid(clusters.labels, default_palette(), tile, 8, gen_out.image);
  write_png(out, grid);
  std::cout << "inertia=" << fmt(clusters.inertia) << " iterations=" << clusters.inertia_history.size()
            << "\n";
  return 0;
}

int run_probe(const fs::path& ckpt, const DataArgs& data_args, const fs::path& out,
              std::int64_t resolution, std::int64_t held_out, std::int64_t n_images,
              const ProbeOptions& options) {
  auto state = checkpoint_load(ckpt);
  auto dataset = load_dataset(resolve_data(data_args, state.config, true));
  if (!dataset.has_masks()) throw ConfigError("probe needs a dataset with label masks");
  const auto n = n_images > 0 ? std::min(n_images, dataset.size()) : dataset.size();
  const auto images = dataset.images.narrow(0, 0, n);
  const auto feats = encoder_features(state.discriminator, images, resolution);
  const auto labels = downsample_labels(dataset.masks.narrow(0, 0, n), resolution);
  const auto result = linear_probe(feats, labels, kShapeClasses, held_out, options);
  append_csv(out, "ckpt,step,resolution,n_images,held_out,accuracy,train_accuracy",
             ckpt.string() + "," + std::to_string(state.step) + "," + std::to_string(resolution) +
                 "," + std::to_string(n) + "," + std::to_string(held_out) + "," +
                 fmt(result.accuracy) + "," + fmt(result.train_accuracy));
  std::cout << "accuracy=" << fmt(result.accuracy) << " train_accuracy=" << fmt(result.train_accuracy)
            << "\n";
  return 0;
}

int run_make_shapes(std::int64_t n, std::int64_t resolution, std::uint64_t seed,
                    const fs::path& out, const std::string& format) {
  const auto shapes = make_synthetic_shapes(n, resolution, seed);
  if (format == "folder") {
    write_image_folder(out, shapes.dataset);
  } else if (format == "packed") {
    write_packed(out, shapes.dataset);
  } else {
    throw ConfigError("unknown format '" + format + "' (expected folder or packed)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generator-guided discriminator regularization for GANs"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug, info, warn or off");
  int threads = 0;
  app.add_option("--threads", threads, "Intra-op threads (0 keeps the torch default)");

  auto* train_cmd = app.add_subcommand("train", "Train a generator / discriminator pair");
  std::string config_path, resume;
  fs::path train_out;
  std::vector<std::string> overrides;
  train_cmd->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  train_cmd->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train_cmd->add_option("--set", overrides, "Override a config key (key=value)");

  auto* eval_cmd = app.add_subcommand("eval", "Desk-scale FID / precision-recall / IS");
  fs::path eval_ckpt, eval_csv;
  DataArgs eval_data;
  std::string metrics = "fid,pr";
  std::int64_t eval_n = 10000;
  std::uint64_t eval_seed = 0, extractor_seed = 0;
  std::int64_t classifier_steps = 2000;
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  add_data_options(eval_cmd, eval_data);
  eval_cmd->add_option("--metrics", metrics, "Comma list of fid, pr, is");
  eval_cmd->add_option("--n", eval_n, "Generated samples");
  eval_cmd->add_option("--seed", eval_seed, "Latent seed");
  eval_cmd->add_option("--csv", eval_csv, "Output CSV (default: eval.csv next to the checkpoint)");
  eval_cmd->add_option("--extractor-seed", extractor_seed, "Feature extractor seed");
  eval_cmd->add_option("--classifier-steps", classifier_steps, "Training steps of the IS classifier");

  auto* vis_cmd = app.add_subcommand("visualize", "k-means overlay of a feature layer");
  fs::path vis_ckpt, vis_out;
  std::int64_t layer = 8, vis_n = 16;
  int k = 6, tile = 64;
  std::uint64_t vis_seed = 0;
  std::string vis_source = "generator";
  bool standardize = false;
  vis_cmd->add_option("--ckpt", vis_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  vis_cmd->add_option("--layer", layer, "Feature resolution");
  vis_cmd->add_option("--k", k, "Clusters");
  vis_cmd->add_option("--seed", vis_seed, "Latent and clustering seed");
  vis_cmd->add_option("--out", vis_out, "Output PNG")->required();
  vis_cmd->add_option("--source", vis_source, "generator, decoder or encoder")
      ->check(CLI::IsMember({"generator", "decoder", "encoder"}));
  vis_cmd->add_option("--n", vis_n, "Images in the batch");
  vis_cmd->add_option("--tile", tile, "Tile size in pixels");
  vis_cmd->add_flag("--standardize", standardize, "Standardize channels before clustering");

  auto* probe_cmd = app.add_subcommand("probe", "Linear segmentation probe on the frozen encoder");
  fs::path probe_ckpt, probe_out;
  DataArgs probe_data;
  std::int64_t probe_res = 16, held_out = 200, probe_n = 1000;
  ProbeOptions probe_opts;
  probe_cmd->add_option("--ckpt", probe_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  add_data_options(probe_cmd, probe_data);
  probe_cmd->add_option("--out", probe_out, "Output CSV")->required();
  probe_cmd->add_option("--resolution", probe_res, "Probe resolution");
  probe_cmd->add_option("--held-out", held_out, "Test images (taken from the end)");
  probe_cmd->add_option("--n", probe_n, "Images used (0 = all)");
  probe_cmd->add_option("--steps", probe_opts.steps, "Probe optimizer steps");
  probe_cmd->add_option("--seed", probe_opts.seed, "Probe seed");

  auto* shapes_cmd = app.add_subcommand("make-shapes", "Write a synthetic-shapes dataset");
  std::int64_t shapes_n = 5000, shapes_res = 32;
  std::uint64_t shapes_seed = 0;
  fs::path shapes_out;
  std::string shapes_format = "folder";
  shapes_cmd->add_option("--n", shapes_n, "Image count");
  shapes_cmd->add_option("--resolution", shapes_res, "Image size");
  shapes_cmd->add_option("--seed", shapes_seed, "Seed");
  shapes_cmd->add_option("--out", shapes_out, "Output directory or packed file")->required();
  shapes_cmd->add_option("--format", shapes_format, "folder or packed")
      ->check(CLI::IsMember({"folder", "packed"}));

  CLI11_PARSE(app, argc, argv);

  try {
    log::set_level(log_level);
    if (threads > 0) torch::set_num_threads(threads);
    if (*train_cmd) return run_train(config_path, train_out, resume, overrides);
    if (*eval_cmd) {
      return run_eval(eval_ckpt, eval_data, metrics, eval_n, eval_seed, eval_csv, extractor_seed,
                      classifier_steps);
    }
    if (*vis_cmd) {
      return run_visualize(vis_ckpt, layer, k, vis_seed, vis_out, vis_source, vis_n, tile,
                           standardize);
    }
    if (*probe_cmd) {
      return run_probe(probe_ckpt, probe_data, probe_out, probe_res, held_out, probe_n, probe_opts);
    }
    if (*shapes_cmd) {
      return run_make_shapes(shapes_n, shapes_res, shapes_seed, shapes_out, shapes_format);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
