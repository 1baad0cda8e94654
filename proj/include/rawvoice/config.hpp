#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rawvoice/dataset.hpp"
#include "rawvoice/error.hpp"
#include "rawvoice/eval.hpp"
#include "rawvoice/model.hpp"
#include "rawvoice/synth.hpp"
#include "rawvoice/train.hpp"

namespace rawvoice {

namespace detail {

/// Parses a flat `key = value` file with `#` comments. No nesting.
inline std::map<std::string, std::string> parse_flat_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  const auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

inline double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': '" + value + "' is not a number");
  }
}

inline int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': '" + value + "' is not an integer");
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': '" + value + "' is not an integer");
  }
}

inline bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ParseError("config key '" + key + "': '" + value + "' is not a boolean");
}

inline std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Flat configuration shared by all subcommands. The effective configuration
/// is defaults, overridden by a config file, overridden by command-line
/// `--set key=value` pairs, in that order.
struct RunConfig {
  // signal / windowing
  int sample_rate = 16000;
  double window_size_s = 1.5;
  double stride_s = 0.1;
  // pipeline
  std::uint64_t pipeline_seed = 42;
  bool balance_enabled = true;
  bool augment_reverse = false;
  bool augment_overlay = false;
  bool augment_noisy_labels = false;
  double overlay_alpha_min = 0.1;
  double overlay_alpha_max = 0.3;
  double label_noise_sigma = 0.5;
  double background_threshold = 0.02;
  double background_frame_s = 0.1;
  // model
  int conv_blocks = 2;
  int filters_per_conv = 4;
  int kernel_size = 3;
  int pool_size = 4;
  int dense_units = 32;
  double conv_dropout = 0.1;
  double dense_dropout = 0.5;
  std::string head = "regression";  // or "classification"
  int classes = 3;
  // training
  int batch_size = 64;
  int epochs = 8;
  double lr = 0.001;
  std::uint64_t train_seed = 42;
  bool shuffle = true;
  // evaluation
  std::string aggregation = "mean";  // or "median"
  std::string rounding = "truncate";  // or "round"
  // synthesis
  SynthSpec synth;
  // paths
  std::string manifest;
  std::string audio_root;
  std::string out_dir;
  std::string model_path;
  std::string train_windows;
  std::string dev_windows;

  WindowingConfig windowing() const {
    WindowingConfig w;
    w.window_size_s = window_size_s;
    w.stride_s = stride_s;
    w.sample_rate = sample_rate;
    return w;
  }

  ModelSpec model_spec() const {
    ModelSpec m;
    m.sample_rate = sample_rate;
    m.window_size_s = window_size_s;
    m.conv_blocks = conv_blocks;
    m.filters_per_conv = filters_per_conv;
    m.kernel_size = kernel_size;
    m.pool_size = pool_size;
    m.dense_units = dense_units;
    m.conv_dropout = conv_dropout;
    m.dense_dropout = dense_dropout;
    if (head == "regression") {
      m.head = HeadKind::kRegression;
    } else if (head == "classification") {
      m.head = HeadKind::kClassification;
    } else {
      throw ConfigError("model.head must be 'regression' or 'classification'");
    }
    m.classes = classes;
    return m;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.batch_size = batch_size;
    t.epochs = epochs;
    t.lr = lr;
    t.seed = train_seed;
    t.shuffle = shuffle;
    return t;
  }

  Aggregation aggregation_method() const {
    if (aggregation == "mean") return Aggregation::kMean;
    if (aggregation == "median") return Aggregation::kMedian;
    throw ConfigError("eval.aggregation must be 'mean' or 'median'");
  }

  RoundingMode rounding_mode() const {
    if (rounding == "truncate") return RoundingMode::kTruncate;
    if (rounding == "round") return RoundingMode::kRound;
    throw ConfigError("eval.rounding must be 'truncate' or 'round'");
  }

  /// Applies one key. Unknown keys are rejected.
  void set(const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "sample_rate") sample_rate = to_int(key, value);
    else if (key == "window.size_s") window_size_s = to_double(key, value);
    else if (key == "window.stride_s") stride_s = to_double(key, value);
    else if (key == "pipeline.seed") pipeline_seed = to_u64(key, value);
    else if (key == "balance.enabled") balance_enabled = to_bool(key, value);
    else if (key == "augment.reverse") augment_reverse = to_bool(key, value);
    else if (key == "augment.overlay") augment_overlay = to_bool(key, value);
    else if (key == "augment.noisy_labels") augment_noisy_labels = to_bool(key, value);
    else if (key == "augment.overlay_alpha_min") overlay_alpha_min = to_double(key, value);
    else if (key == "augment.overlay_alpha_max") overlay_alpha_max = to_double(key, value);
    else if (key == "augment.label_noise_sigma") label_noise_sigma = to_double(key, value);
    else if (key == "background.threshold") background_threshold = to_double(key, value);
    else if (key == "background.frame_s") background_frame_s = to_double(key, value);
    else if (key == "model.conv_blocks") conv_blocks = to_int(key, value);
    else if (key == "model.filters_per_conv") filters_per_conv = to_int(key, value);
    else if (key == "model.kernel_size") kernel_size = to_int(key, value);
    else if (key == "model.pool_size") pool_size = to_int(key, value);
    else if (key == "model.dense_units") dense_units = to_int(key, value);
    else if (key == "model.conv_dropout") conv_dropout = to_double(key, value);
    else if (key == "model.dense_dropout") dense_dropout = to_double(key, value);
    else if (key == "model.head") head = value;
    else if (key == "model.classes") classes = to_int(key, value);
    else if (key == "train.batch_size") batch_size = to_int(key, value);
    else if (key == "train.epochs") epochs = to_int(key, value);
    else if (key == "train.lr") lr = to_double(key, value);
    else if (key == "train.seed") train_seed = to_u64(key, value);
    else if (key == "train.shuffle") shuffle = to_bool(key, value);
    else if (key == "eval.aggregation") aggregation = value;
    else if (key == "eval.rounding") rounding = value;
    else if (key == "synth.clips_per_label") synth.clips_per_label = to_int(key, value);
    else if (key == "synth.num_labels") synth.num_labels = to_int(key, value);
    else if (key == "synth.duration_mean") synth.duration_mean = to_double(key, value);
    else if (key == "synth.duration_std") synth.duration_std = to_double(key, value);
    else if (key == "synth.duration_min") synth.duration_min = to_double(key, value);
    else if (key == "synth.duration_max") synth.duration_max = to_double(key, value);
    else if (key == "synth.base_freq_hz") synth.base_freq_hz = to_double(key, value);
    else if (key == "synth.freq_step_hz") synth.freq_step_hz = to_double(key, value);
    else if (key == "synth.noise_floor") synth.noise_floor = to_double(key, value);
    else if (key == "synth.sample_rate") synth.sample_rate = to_int(key, value);
    else if (key == "synth.seed") synth.seed = to_u64(key, value);
    else if (key == "paths.manifest") manifest = value;
    else if (key == "paths.audio_root") audio_root = value;
    else if (key == "paths.out_dir") out_dir = value;
    else if (key == "paths.model") model_path = value;
    else if (key == "paths.train_windows") train_windows = value;
    else if (key == "paths.dev_windows") dev_windows = value;
    else throw ConfigError("unknown config key '" + key + "'");
  }

  /// Every key in a stable order, as written by save().
  std::vector<std::pair<std::string, std::string>> items() const {
    using namespace detail;
    const auto b = [](bool v) { return v ? std::string("true") : std::string("false"); };
    return {
        {"sample_rate", std::to_string(sample_rate)},
        {"window.size_s", format_double(window_size_s)},
        {"window.stride_s", format_double(stride_s)},
        {"pipeline.seed", std::to_string(pipeline_seed)},
        {"balance.enabled", b(balance_enabled)},
        {"augment.reverse", b(augment_reverse)},
        {"augment.overlay", b(augment_overlay)},
        {"augment.noisy_labels", b(augment_noisy_labels)},
        {"augment.overlay_alpha_min", format_double(overlay_alpha_min)},
        {"augment.overlay_alpha_max", format_double(overlay_alpha_max)},
        {"augment.label_noise_sigma", format_double(label_noise_sigma)},
        {"background.threshold", format_double(background_threshold)},
        {"background.frame_s", format_double(background_frame_s)},
        {"model.conv_blocks", std::to_string(conv_blocks)},
        {"model.filters_per_conv", std::to_string(filters_per_conv)},
        {"model.kernel_size", std::to_string(kernel_size)},
        {"model.pool_size", std::to_string(pool_size)},
        {"model.dense_units", std::to_string(dense_units)},
        {"model.conv_dropout", format_double(conv_dropout)},
        {"model.dense_dropout", format_double(dense_dropout)},
        {"model.head", head},
        {"model.classes", std::to_string(classes)},
        {"train.batch_size", std::to_string(batch_size)},
        {"train.epochs", std::to_string(epochs)},
        {"train.lr", format_double(lr)},
        {"train.seed", std::to_string(train_seed)},
        {"train.shuffle", b(shuffle)},
        {"eval.aggregation", aggregation},
        {"eval.rounding", rounding},
        {"synth.clips_per_label", std::to_string(synth.clips_per_label)},
        {"synth.num_labels", std::to_string(synth.num_labels)},
        {"synth.duration_mean", format_double(synth.duration_mean)},
        {"synth.duration_std", format_double(synth.duration_std)},
        {"synth.duration_min", format_double(synth.duration_min)},
        {"synth.duration_max", format_double(synth.duration_max)},
        {"synth.base_freq_hz", format_double(synth.base_freq_hz)},
        {"synth.freq_step_hz", format_double(synth.freq_step_hz)},
        {"synth.noise_floor", format_double(synth.noise_floor)},
        {"synth.sample_rate", std::to_string(synth.sample_rate)},
        {"synth.seed", std::to_string(synth.seed)},
        {"paths.manifest", manifest},
        {"paths.audio_root", audio_root},
        {"paths.out_dir", out_dir},
        {"paths.model", model_path},
        {"paths.train_windows", train_windows},
        {"paths.dev_windows", dev_windows},
    };
  }

  /// defaults -> config file -> overrides (strongest last).
  static RunConfig load(const std::filesystem::path& file,
                        const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    RunConfig cfg;
    if (!file.empty()) {
      for (const auto& [k, v] : detail::parse_flat_config(file)) cfg.set(k, v);
    }
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    return cfg;
  }

  /// Echoes the effective configuration; re-running from this file
  /// reproduces the run.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config " + path.string());
    for (const auto& [k, v] : items()) out << k << " = " << v << '\n';
  }
};

}  // namespace rawvoice
