#include <cstdio>
#include <functional>
#include <sstream>
#include <vector>

#include "ggdr/errors.hpp"
#include "ggdr/train.hpp"

namespace ggdr {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string& key, const std::string& value)> set;
};

template <typename T>
Field int_field(const char* key, T TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return std::to_string(c.*member); },
          [member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<T>(parse_int(k, v));
          }};
}

Field net_int(const char* key, std::int64_t NetConfig::*member) {
  return {key, [member](const TrainConfig& c) { return std::to_string(c.net.*member); },
          [member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.net.*member = parse_int(k, v);
          }};
}

Field dbl_field(const char* key, double TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return fmt_double(c.*member); },
          [member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_double(k, v);
          }};
}

Field bool_field(const char* key, bool TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return fmt_bool(c.*member); },
          [member](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_bool(k, v);
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // Architecture.
    f.push_back(net_int("image_size", &NetConfig::image_size));
    f.push_back(net_int("image_channels", &NetConfig::image_channels));
    f.push_back(net_int("z_dim", &NetConfig::z_dim));
    f.push_back(net_int("base_channels", &NetConfig::base_channels));
    f.push_back(net_int("channel_max", &NetConfig::channel_max));
    f.push_back(net_int("guidance_resolution", &NetConfig::guidance_resolution));
    f.push_back(net_int("decoder_kernel", &NetConfig::decoder_kernel));
    f.push_back({"decoder_activation",
                 [](const TrainConfig& c) { return to_string(c.net.decoder_activation); },
                 [](TrainConfig& c, const std::string&, const std::string& v) {
                   c.net.decoder_activation = parse_decoder_activation(v);
                 }});
    f.push_back({"decoder_upsample",
                 [](const TrainConfig& c) { return to_string(c.net.decoder_upsample); },
                 [](TrainConfig& c, const std::string&, const std::string& v) {
                   c.net.decoder_upsample = parse_upsample_mode(v);
                 }});
    f.push_back({"use_decoder", [](const TrainConfig& c) { return fmt_bool(c.net.use_decoder); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.net.use_decoder = parse_bool(k, v);
                 }});
    f.push_back(net_int("seg_classes", &NetConfig::seg_classes));
    // Objective.
    f.push_back(dbl_field("lambda_reg", &TrainConfig::lambda_reg));
    f.push_back(dbl_field("r1_gamma", &TrainConfig::r1_gamma));
    f.push_back(int_field("r1_interval", &TrainConfig::r1_interval));
    f.push_back(int_field("ggdr_start_step", &TrainConfig::ggdr_start_step));
    f.push_back(bool_field("aux_seg_mode", &TrainConfig::aux_seg_mode));
    f.push_back(dbl_field("aux_seg_weight", &TrainConfig::aux_seg_weight));
    // Optimization.
    f.push_back({"lr", [](const TrainConfig& c) { return fmt_double(c.optimizer.lr); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.optimizer.lr = parse_double(k, v);
                 }});
    f.push_back({"beta1", [](const TrainConfig& c) { return fmt_double(c.optimizer.beta1); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.optimizer.beta1 = parse_double(k, v);
                 }});
    f.push_back({"beta2", [](const TrainConfig& c) { return fmt_double(c.optimizer.beta2); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.optimizer.beta2 = parse_double(k, v);
                 }});
    f.push_back({"adam_eps", [](const TrainConfig& c) { return fmt_double(c.optimizer.eps); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.optimizer.eps = parse_double(k, v);
                 }});
    f.push_back(int_field("batch_size", &TrainConfig::batch_size));
    f.push_back(int_field("total_steps", &TrainConfig::total_steps));
    f.push_back({"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.seed = parse_uint(k, v);
                 }});
    f.push_back(bool_field("ema_enabled", &TrainConfig::ema_enabled));
    f.push_back(dbl_field("ema_decay", &TrainConfig::ema_decay));
    // Augmentation.
    f.push_back({"augment.enabled", [](const TrainConfig& c) { return fmt_bool(c.augment.enabled); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.augment.enabled = parse_bool(k, v);
                 }});
    f.push_back({"augment.p", [](const TrainConfig& c) { return fmt_double(c.augment.p); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.augment.p = parse_double(k, v);
                 }});
    f.push_back({"augment.adaptive", [](const TrainConfig& c) { return fmt_bool(c.augment.adaptive); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.augment.adaptive = parse_bool(k, v);
                 }});
    f.push_back({"augment.target_rt", [](const TrainConfig& c) { return fmt_double(c.augment.target_rt); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.augment.target_rt = parse_double(k, v);
                 }});
    f.push_back({"augment.step_size", [](const TrainConfig& c) { return fmt_double(c.augment.step_size); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.augment.step_size = parse_double(k, v);
                 }});
    f.push_back({"augment.window", [](const TrainConfig& c) { return std::to_string(c.augment.window); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.augment.window = parse_int(k, v);
                 }});
    f.push_back({"augment.reals", [](const TrainConfig& c) { return fmt_bool(c.augment.augment_reals); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.augment.augment_reals = parse_bool(k, v);
                 }});
    // Data.
    f.push_back({"data.source", [](const TrainConfig& c) { return to_string(c.data.source); },
                 [](TrainConfig& c, const std::string&, const std::string& v) {
                   c.data.source = parse_data_source(v);
                 }});
    f.push_back({"data.path", [](const TrainConfig& c) { return c.data.path.string(); },
                 [](TrainConfig& c, const std::string&, const std::string& v) { c.data.path = v; }});
    f.push_back({"data.hflip", [](const TrainConfig& c) { return fmt_bool(c.data.horizontal_flip); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.data.horizontal_flip = parse_bool(k, v);
                 }});
    f.push_back({"data.masks", [](const TrainConfig& c) { return fmt_bool(c.data.label_masks); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.data.label_masks = parse_bool(k, v);
                 }});
    f.push_back({"data.n", [](const TrainConfig& c) { return std::to_string(c.data.synthetic_count); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.data.synthetic_count = parse_int(k, v);
                 }});
    f.push_back({"data.seed", [](const TrainConfig& c) { return std::to_string(c.data.synthetic_seed); },
                 [](TrainConfig& c, const std::string& k, const std::string& v) {
                   c.data.synthetic_seed = parse_uint(k, v);
                 }});
    // Outputs.
    f.push_back(int_field("log_interval", &TrainConfig::log_interval));
    f.push_back(int_field("ckpt_interval", &TrainConfig::ckpt_interval));
    f.push_back(int_field("sample_interval", &TrainConfig::sample_interval));
    return f;
  }();
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  net.validate();
  if (!(lambda_reg >= 0.0)) throw ConfigError("lambda_reg must be >= 0");
  if (!(r1_gamma >= 0.0)) throw ConfigError("r1_gamma must be >= 0");
  if (r1_interval < 1) throw ConfigError("r1_interval must be >= 1");
  if (!(optimizer.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (optimizer.beta1 < 0.0 || optimizer.beta1 >= 1.0 || optimizer.beta2 < 0.0 ||
      optimizer.beta2 >= 1.0) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
  if (ema_decay < 0.0 || ema_decay > 1.0) throw ConfigError("ema_decay must lie in [0, 1]");
  if (ggdr_start_step < 0) throw ConfigError("ggdr_start_step must be >= 0");
  if (aux_seg_mode && net.seg_classes < 1) {
    throw ConfigError("aux_seg_mode needs seg_classes > 0");
  }
  if (aux_seg_mode && !data.label_masks) throw ConfigError("aux_seg_mode needs data.masks = true");
  if (augment.p < 0.0 || augment.p > 1.0) throw ConfigError("augment.p must lie in [0, 1]");
  if (augment.window < 1) throw ConfigError("augment.window must be >= 1");
  if (log_interval < 1) throw ConfigError("log_interval must be >= 1");
  if (ckpt_interval < 0 || sample_interval < 0) {
    throw ConfigError("output intervals must be >= 0");
  }
}

TrainConfig train_config_from(const KeyValues& kv) {
  TrainConfig c;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  for (const auto& [key, value] : kv) {
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second->set(c, key, value);
  }
  c.data.resolution = c.net.image_size;
  c.data.channels = c.net.image_channels;
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return train_config_from(read_key_values(path));
}

KeyValues train_config_to_kv(const TrainConfig& config) {
  KeyValues kv;
  for (const auto& f : fields()) kv[f.key] = f.get(config);
  return kv;
}

std::string format_train_config(const TrainConfig& config) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(config) << "\n";
  return os.str();
}

}  // namespace ggdr
