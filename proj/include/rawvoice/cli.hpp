#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rawvoice/config.hpp"
#include "rawvoice/eval.hpp"
#include "rawvoice/pipeline.hpp"
#include "rawvoice/synth.hpp"
#include "rawvoice/train.hpp"

namespace rawvoice::cli {

namespace detail {

inline std::pair<std::string, std::string> split_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set expects key=value, got '" + kv + "'");
  }
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> sets;

  RunConfig effective(const std::vector<std::pair<std::string, std::string>>& flag_overrides)
      const {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& kv : sets) overrides.push_back(split_override(kv));
    overrides.insert(overrides.end(), flag_overrides.begin(), flag_overrides.end());
    return RunConfig::load(config_file, overrides);
  }
};

inline void add_common(CLI::App* cmd, CommonArgs& common) {
  cmd->add_option("--config", common.config_file, "flat key = value config file");
  cmd->add_option("--set", common.sets, "override a config key (key=value, repeatable)")
      ->allow_extra_args(false);  // exactly one key=value per occurrence
}

inline std::filesystem::path require_out_dir(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("an output directory is required (paths.out_dir)");
  std::filesystem::create_directories(cfg.out_dir);
  return cfg.out_dir;
}

inline void require_input(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " is required");
  if (!std::filesystem::exists(path)) {
    throw IoError(std::string(what) + " '" + path + "' does not exist");
  }
}

inline void print_stats_table(const CorpusStats& stats, std::ostream& out) {
  out << "Dataset      Samples   mean    std     min     max\n";
  for (const Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
    const auto& v = stats.of(s);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %7zu   %-7.2f %-7.2f %-7.2f %-7.2f\n",
                  split_name(s), v.count, v.mean, v.stddev, v.min, v.max);
    out << buf;
  }
}

inline void save_stats_csv(const CorpusStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "split,count,mean,std,min,max\n";
  for (const Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
    const auto& v = stats.of(s);
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s,%zu,%.10g,%.10g,%.10g,%.10g\n", split_name(s),
                  v.count, v.mean, v.stddev, v.min, v.max);
    out << buf;
  }
}

inline int cmd_synth(const RunConfig& cfg) {
  const auto out_dir = require_out_dir(cfg);
  const Manifest manifest = generate_corpus(cfg.synth, out_dir);
  cfg.save(out_dir / "effective.cfg");
  std::cout << "wrote " << manifest.entries.size() << " clips and manifest.csv to "
            << out_dir.string() << "\n";
  return 0;
}

inline int cmd_stats(const RunConfig& cfg) {
  require_input(cfg.manifest, "manifest (paths.manifest)");
  require_input(cfg.audio_root, "audio root (paths.audio_root)");
  const Manifest manifest = load_manifest(cfg.manifest);
  const CorpusStats stats = corpus_stats(manifest, cfg.audio_root);
  print_stats_table(stats, std::cout);
  if (!cfg.out_dir.empty()) {
    const auto out_dir = require_out_dir(cfg);
    save_stats_csv(stats, out_dir / "stats.csv");
    cfg.save(out_dir / "effective.cfg");
  }
  return 0;
}

inline int cmd_preprocess(const RunConfig& cfg, const std::string& split_str) {
  require_input(cfg.manifest, "manifest (paths.manifest)");
  require_input(cfg.audio_root, "audio root (paths.audio_root)");
  const auto out_dir = require_out_dir(cfg);
  const Split split = parse_split(split_str);
  const Manifest manifest = load_manifest(cfg.manifest);
  // balancing and augmentation are training transforms; dev and test windows
  // are exported untouched
  const bool transforms = split == Split::kTrain;
  const auto windows = build_windows(manifest, split, cfg.audio_root, cfg, transforms);
  const auto file = out_dir / (std::string(split_name(split)) + "_windows.rvw");
  save_windows(windows, file);
  cfg.save(out_dir / "effective.cfg");
  std::cout << "wrote " << windows.size() << " windows to " << file.string() << "\n";
  return 0;
}

inline int cmd_train(const RunConfig& cfg) {
  require_input(cfg.train_windows, "training windows (paths.train_windows)");
  require_input(cfg.dev_windows, "dev windows (paths.dev_windows)");
  const auto out_dir = require_out_dir(cfg);

  const auto train_set = load_windows(cfg.train_windows);
  const auto dev_set = load_windows(cfg.dev_windows);

  ModelState<float> model = build_model(cfg.model_spec(), cfg.train_seed);
  TrainConfig tc = cfg.train_config();
  tc.checkpoint_path = out_dir / "checkpoint.rvm";
  const TrainResult result = train(std::move(model), train_set, dev_set, tc);

  save_history_csv(result.history, out_dir / "history.csv");
  cfg.save(out_dir / "effective.cfg");
  const auto& best = result.history.epochs[static_cast<std::size_t>(
      result.history.best_epoch - 1)];
  std::cout << "best epoch " << result.history.best_epoch << " dev loss " << best.dev_loss
            << "; checkpoint at " << tc.checkpoint_path.string() << "\n";
  return 0;
}

inline int cmd_evaluate(const RunConfig& cfg, const std::string& split_str) {
  require_input(cfg.manifest, "manifest (paths.manifest)");
  require_input(cfg.audio_root, "audio root (paths.audio_root)");
  require_input(cfg.model_path, "model (paths.model)");
  const auto out_dir = require_out_dir(cfg);

  const Manifest manifest = load_manifest(cfg.manifest);
  const ModelState<float> model = load_model<float>(cfg.model_path);
  // window length and rate come from the model; the stride from the config
  WindowingConfig wcfg;
  wcfg.window_size_s = model.spec.window_size_s;
  wcfg.sample_rate = model.spec.sample_rate;
  wcfg.stride_s = cfg.stride_s;

  const EvalReport report =
      evaluate_clips(model, manifest, parse_split(split_str), cfg.audio_root, wcfg,
                     cfg.aggregation_method(), cfg.rounding_mode(), cfg.batch_size);
  save_report_csv(report, out_dir / "report.csv");
  save_report_summary(report, out_dir / "summary.txt");
  cfg.save(out_dir / "effective.cfg");

  std::cout << "clips " << report.clips.size() << " mse " << report.mse << " mae "
            << report.mae;
  if (report.rho) std::cout << " rho " << *report.rho;
  if (report.uar) std::cout << " uar " << *report.uar;
  std::cout << "\n";
  return 0;
}

inline int cmd_predict(const RunConfig& cfg, const std::vector<std::string>& files) {
  require_input(cfg.model_path, "model (paths.model)");
  if (files.empty()) throw ConfigError("predict needs at least one wav file");
  const ModelState<float> model = load_model<float>(cfg.model_path);
  WindowingConfig wcfg;
  wcfg.window_size_s = model.spec.window_size_s;
  wcfg.sample_rate = model.spec.sample_rate;
  wcfg.stride_s = cfg.stride_s;

  for (const auto& file : files) {
    AudioClip clip = decode_wav(file);
    if (clip.sample_rate != wcfg.sample_rate) clip = resample(clip, wcfg.sample_rate);
    const auto windows = extract_windows(clip, wcfg);
    const auto window_len = static_cast<std::size_t>(wcfg.window_samples());
    Tensor<float> input({windows.size(), 1, window_len});
    for (std::size_t i = 0; i < windows.size(); ++i) {
      std::copy(windows[i].samples.begin(), windows[i].samples.end(),
                &input.data[i * window_len]);
    }
    const Tensor<float> head = forward_infer(model, input);
    int rating;
    if (model.spec.head == HeadKind::kClassification) {
      const Tensor<float> probs = softmax(head);
      const auto k = static_cast<std::size_t>(model.spec.classes);
      std::vector<float> mean_probs(k, 0.0f);
      for (std::size_t i = 0; i < windows.size(); ++i) {
        for (std::size_t c = 0; c < k; ++c) {
          mean_probs[c] += probs.data[i * k + c] / static_cast<float>(windows.size());
        }
      }
      rating = static_cast<int>(std::max_element(mean_probs.begin(), mean_probs.end()) -
                                mean_probs.begin()) +
               1;
    } else {
      std::vector<float> preds(head.data.begin(), head.data.end());
      rating = aggregate(preds, cfg.aggregation_method(), cfg.rounding_mode());
    }
    std::cout << clip.id << " " << rating << "\n";
  }
  return 0;
}

/// One training-plus-evaluation run of the comparison grid.
inline void report_run(const std::string& config_id, const RunConfig& cfg,
                       const Manifest& manifest, const std::filesystem::path& out_dir,
                       std::ofstream& grid) {
  const auto run_dir = out_dir / config_id;
  std::filesystem::create_directories(run_dir);
  cfg.save(run_dir / "effective.cfg");

  auto train_set = build_windows(manifest, Split::kTrain, cfg.audio_root, cfg, true);
  auto dev_set = build_windows(manifest, Split::kDev, cfg.audio_root, cfg, false);

  ModelState<float> model = build_model(cfg.model_spec(), cfg.train_seed);
  TrainConfig tc = cfg.train_config();
  tc.checkpoint_path = run_dir / "checkpoint.rvm";
  const TrainResult result = train(std::move(model), train_set, dev_set, tc);
  save_history_csv(result.history, run_dir / "history.csv");

  WindowingConfig wcfg = cfg.windowing();
  const EvalReport report =
      evaluate_clips(result.best_model, manifest, Split::kDev, cfg.audio_root, wcfg,
                     cfg.aggregation_method(), cfg.rounding_mode(), cfg.batch_size);

  char buf[256];
  if (report.rho) {
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%.10g\n", config_id.c_str(), report.mse,
                  report.mae, *report.rho);
  } else {
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,\n", config_id.c_str(), report.mse,
                  report.mae);
  }
  grid << buf;
  grid.flush();
  std::cout << config_id << ": mse " << report.mse << " mae " << report.mae;
  if (report.rho) std::cout << " rho " << *report.rho;
  std::cout << "\n";
}

/// Comparison grid over sample rate, window size, conv blocks and the three
/// augmentation techniques, one variation at a time against the baseline.
/// The stride stays fixed.
inline int cmd_report(const RunConfig& base) {
  require_input(base.manifest, "manifest (paths.manifest)");
  require_input(base.audio_root, "audio root (paths.audio_root)");
  const auto out_dir = require_out_dir(base);
  const Manifest manifest = load_manifest(base.manifest);
  base.save(out_dir / "effective.cfg");

  std::ofstream grid(out_dir / "grid.csv");
  if (!grid) throw IoError("cannot write grid.csv");
  grid << "config_id,mse,mae,rho\n";

  report_run("baseline", base, manifest, out_dir, grid);
  {
    RunConfig cfg = base;
    cfg.window_size_s = 1.0;
    report_run("window_1.0s", cfg, manifest, out_dir, grid);
  }
  {
    RunConfig cfg = base;
    cfg.sample_rate = 8000;
    report_run("rate_8khz", cfg, manifest, out_dir, grid);
  }
  {
    RunConfig cfg = base;
    cfg.conv_blocks = 3;
    report_run("conv_blocks_3", cfg, manifest, out_dir, grid);
  }
  {
    RunConfig cfg = base;
    cfg.augment_reverse = true;
    report_run("aug_reverse", cfg, manifest, out_dir, grid);
  }
  {
    RunConfig cfg = base;
    cfg.augment_overlay = true;
    report_run("aug_overlay", cfg, manifest, out_dir, grid);
  }
  {
    RunConfig cfg = base;
    cfg.augment_noisy_labels = true;
    report_run("aug_noisy_labels", cfg, manifest, out_dir, grid);
  }
  std::cout << "grid written to " << (out_dir / "grid.csv").string() << "\n";
  return 0;
}

}  // namespace detail

/// Entry point shared by the binary and the tests. `args` excludes the
/// program name.
inline int run_command(std::vector<std::string> args) {
  CLI::App app{"end-to-end raw-audio rating pipeline"};
  app.require_subcommand(1);

  detail::CommonArgs common;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  detail::add_common(synth, common);
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory");

  auto* stats = app.add_subcommand("stats", "per-split duration statistics");
  detail::add_common(stats, common);
  std::string stats_manifest, stats_root, stats_out;
  stats->add_option("--manifest", stats_manifest, "manifest CSV");
  stats->add_option("--audio-root", stats_root, "directory with the WAV files");
  stats->add_option("--out", stats_out, "optional output directory for stats.csv");

  auto* preprocess = app.add_subcommand(
      "preprocess", "resample, window, balance and augment one split");
  detail::add_common(preprocess, common);
  std::string pre_manifest, pre_root, pre_out, pre_split = "train";
  preprocess->add_option("--manifest", pre_manifest, "manifest CSV");
  preprocess->add_option("--audio-root", pre_root, "directory with the WAV files");
  preprocess->add_option("--split", pre_split, "train|dev|test (default train)");
  preprocess->add_option("--out", pre_out, "output directory");

  auto* train_cmd = app.add_subcommand("train", "train a model on window files");
  detail::add_common(train_cmd, common);
  std::string train_tw, train_dw, train_out;
  train_cmd->add_option("--train-windows", train_tw, "RVW1 file with training windows");
  train_cmd->add_option("--dev-windows", train_dw, "RVW1 file with dev windows");
  train_cmd->add_option("--out", train_out, "output directory");

  auto* evaluate = app.add_subcommand("evaluate", "per-clip evaluation of a split");
  detail::add_common(evaluate, common);
  std::string eval_manifest, eval_root, eval_model, eval_out, eval_split = "dev";
  evaluate->add_option("--manifest", eval_manifest, "manifest CSV");
  evaluate->add_option("--audio-root", eval_root, "directory with the WAV files");
  evaluate->add_option("--model", eval_model, "model file");
  evaluate->add_option("--split", eval_split, "train|dev|test (default dev)");
  evaluate->add_option("--out", eval_out, "output directory");

  auto* predict = app.add_subcommand("predict", "print ratings for wav files");
  detail::add_common(predict, common);
  std::string predict_model;
  std::vector<std::string> predict_files;
  predict->add_option("--model", predict_model, "model file");
  predict->add_option("files", predict_files, "wav files to rate");

  auto* report = app.add_subcommand("report", "train/evaluate the comparison grid");
  detail::add_common(report, common);
  std::string report_manifest, report_root, report_out;
  report->add_option("--manifest", report_manifest, "manifest CSV");
  report->add_option("--audio-root", report_root, "directory with the WAV files");
  report->add_option("--out", report_out, "output directory");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto flag = [](const std::string& key, const std::string& value) {
      return std::pair<std::string, std::string>(key, value);
    };
    if (synth->parsed()) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (!synth_out.empty()) flags.push_back(flag("paths.out_dir", synth_out));
      return detail::cmd_synth(common.effective(flags));
    }
    if (stats->parsed()) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (!stats_manifest.empty()) flags.push_back(flag("paths.manifest", stats_manifest));
      if (!stats_root.empty()) flags.push_back(flag("paths.audio_root", stats_root));
      if (!stats_out.empty()) flags.push_back(flag("paths.out_dir", stats_out));
      return detail::cmd_stats(common.effective(flags));
    }
    if (preprocess->parsed()) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (!pre_manifest.empty()) flags.push_back(flag("paths.manifest", pre_manifest));
      if (!pre_root.empty()) flags.push_back(flag("paths.audio_root", pre_root));
      if (!pre_out.empty()) flags.push_back(flag("paths.out_dir", pre_out));
      return detail::cmd_preprocess(common.effective(flags), pre_split);
    }
    if (train_cmd->parsed()) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (!train_tw.empty()) flags.push_back(flag("paths.train_windows", train_tw));
      if (!train_dw.empty()) flags.push_back(flag("paths.dev_windows", train_dw));
      if (!train_out.empty()) flags.push_back(flag("paths.out_dir", train_out));
      return detail::cmd_train(common.effective(flags));
    }
    if (evaluate->parsed()) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (!eval_manifest.empty()) flags.push_back(flag("paths.manifest", eval_manifest));
      if (!eval_root.empty()) flags.push_back(flag("paths.audio_root", eval_root));
      if (!eval_model.empty()) flags.push_back(flag("paths.model", eval_model));
      if (!eval_out.empty()) flags.push_back(flag("paths.out_dir", eval_out));
      return detail::cmd_evaluate(common.effective(flags), eval_split);
    }
    if (predict->parsed()) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (!predict_model.empty()) flags.push_back(flag("paths.model", predict_model));
      return detail::cmd_predict(common.effective(flags), predict_files);
    }
    if (report->parsed()) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (!report_manifest.empty()) flags.push_back(flag("paths.manifest", report_manifest));
      if (!report_root.empty()) flags.push_back(flag("paths.audio_root", report_root));
      if (!report_out.empty()) flags.push_back(flag("paths.out_dir", report_out));
      return detail::cmd_report(common.effective(flags));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace rawvoice::cli
