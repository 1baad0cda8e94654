#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rawvoice/dataset.hpp"
#include "rawvoice/error.hpp"
#include "rawvoice/model.hpp"

namespace rawvoice {

enum class Aggregation { kMean, kMedian };
enum class RoundingMode { kTruncate, kRound };

inline const char* aggregation_name(Aggregation a) {
  return a == Aggregation::kMean ? "mean" : "median";
}

/// Combines window predictions into one clip rating: mean or median, clamped
/// to [1, 9], then cast to an integer. The cast truncates toward zero by
/// default; rounding is available behind the config switch.
inline int aggregate(std::span<const float> preds, Aggregation method,
                     RoundingMode rounding = RoundingMode::kTruncate) {
  if (preds.empty()) throw InputError("cannot aggregate an empty prediction list");
  double combined;
  if (method == Aggregation::kMean) {
    double acc = 0.0;
    for (float p : preds) acc += p;
    combined = acc / static_cast<double>(preds.size());
  } else {
    std::vector<float> sorted(preds.begin(), preds.end());
    std::sort(sorted.begin(), sorted.end());
    combined = sorted[(sorted.size() - 1) / 2];  // lower middle for even counts
  }
  const double clamped = std::clamp(combined, 1.0, 9.0);
  return rounding == RoundingMode::kTruncate ? static_cast<int>(clamped)
                                             : static_cast<int>(std::lround(clamped));
}

namespace detail {

/// Fractional (average-tie) ranks, 1-based.
inline std::vector<double> fractional_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Spearman's rank correlation: Pearson correlation of average-tie ranks.
inline double spearman_rho(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw InputError("spearman length mismatch");
  if (pred.size() < 2) throw MetricError("spearman needs at least two observations");
  const auto all_equal = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (all_equal(pred) || all_equal(truth)) {
    throw MetricError("spearman undefined for a constant input");
  }

  const auto ra = detail::fractional_ranks(pred);
  const auto rb = detail::fractional_ranks(truth);
  const std::size_t n = ra.size();
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(n);
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xa = ra[i] - ma, xb = rb[i] - mb;
    num += xa * xb;
    da += xa * xa;
    db += xb * xb;
  }
  return num / std::sqrt(da * db);
}

inline double mse_metric(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw InputError("metric length mismatch or empty input");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

inline double mae_metric(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw InputError("metric length mismatch or empty input");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
  return acc / static_cast<double>(pred.size());
}

/// Unweighted average recall over classes 0..K-1. Every class must appear in
/// the true labels, otherwise its recall is undefined.
inline double uar(std::span<const int> pred, std::span<const int> truth, int num_classes) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw InputError("metric length mismatch or empty input");
  }
  std::vector<std::size_t> correct(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::size_t> total(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes) {
      throw InputError("class index outside [0, " + std::to_string(num_classes) + ")");
    }
    ++total[static_cast<std::size_t>(truth[i])];
    if (pred[i] == truth[i]) ++correct[static_cast<std::size_t>(truth[i])];
  }
  double acc = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    if (total[static_cast<std::size_t>(c)] == 0) {
      throw MetricError("recall undefined: class " + std::to_string(c) +
                        " absent from true labels");
    }
    acc += static_cast<double>(correct[static_cast<std::size_t>(c)]) /
           static_cast<double>(total[static_cast<std::size_t>(c)]);
  }
  return acc / static_cast<double>(num_classes);
}

struct ClipPrediction {
  std::string id;
  std::vector<float> window_preds;  // regression values or class probabilities
  int rating = 0;                   // aggregated clip rating in [1, 9]
  int true_label = 0;
};

struct EvalReport {
  std::vector<ClipPrediction> clips;
  std::optional<double> rho;  // unset when undefined (constant inputs)
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> uar;  // classification runs only
  Aggregation aggregation = Aggregation::kMean;
};

/// Runs infer-mode prediction over one manifest split: windows are extracted
/// exactly as in training (no balancing, no augmentation), window outputs are
/// aggregated per clip and metrics computed over clips.
inline EvalReport evaluate_clips(const ModelState<float>& model, const Manifest& manifest,
                                 Split split, const std::filesystem::path& audio_root,
                                 const WindowingConfig& cfg, Aggregation method,
                                 RoundingMode rounding = RoundingMode::kTruncate,
                                 int batch_size = 64) {
  if (cfg.sample_rate != model.spec.sample_rate ||
      cfg.window_samples() != model.spec.window_samples()) {
    throw ConfigError("windowing configuration does not match the model spec");
  }
  EvalReport report;
  report.aggregation = method;

  const bool classification = model.spec.head == HeadKind::kClassification;
  const auto k = static_cast<std::size_t>(model.spec.classes);

  for (const auto& entry : manifest.entries) {
    if (entry.split != split) continue;
    AudioClip clip = decode_wav(audio_root / entry.file);
    clip.label = entry.label;
    if (clip.sample_rate != cfg.sample_rate) clip = resample(clip, cfg.sample_rate);
    const auto windows = extract_windows(clip, cfg);

    ClipPrediction cp;
    cp.id = clip.id;
    cp.true_label = entry.label;

    const auto window_len = static_cast<std::size_t>(cfg.window_samples());
    std::vector<float> head_rows;  // regression: one value per window;
                                   // classification: mean probability per class
    if (classification) head_rows.assign(k, 0.0f);
    for (std::size_t start = 0; start < windows.size();
         start += static_cast<std::size_t>(batch_size)) {
      const std::size_t count = std::min<std::size_t>(
          static_cast<std::size_t>(batch_size), windows.size() - start);
      Tensor<float> input({count, 1, window_len});
      for (std::size_t i = 0; i < count; ++i) {
        std::copy(windows[start + i].samples.begin(), windows[start + i].samples.end(),
                  &input.data[i * window_len]);
      }
      Tensor<float> head = forward_infer(model, input);
      if (classification) {
        head = softmax(head);
        for (std::size_t i = 0; i < count; ++i) {
          for (std::size_t c = 0; c < k; ++c) {
            head_rows[c] += head.data[i * k + c] / static_cast<float>(windows.size());
          }
        }
      } else {
        for (std::size_t i = 0; i < count; ++i) head_rows.push_back(head.data[i]);
      }
    }

    if (classification) {
      cp.window_preds = head_rows;
      const auto best = std::max_element(head_rows.begin(), head_rows.end());
      cp.rating = static_cast<int>(best - head_rows.begin()) + 1;  // class -> label
    } else {
      cp.window_preds = std::move(head_rows);
      cp.rating = aggregate(cp.window_preds, method, rounding);
    }
    report.clips.push_back(std::move(cp));
  }

  if (report.clips.empty()) throw ConfigError("split has no clips to evaluate");
  if (report.clips.size() < 2) {
    throw MetricError("rank correlation undefined for fewer than two clips");
  }

  std::vector<double> pred, truth;
  pred.reserve(report.clips.size());
  truth.reserve(report.clips.size());
  for (const auto& c : report.clips) {
    pred.push_back(c.rating);
    truth.push_back(c.true_label);
  }
  report.mse = mse_metric(pred, truth);
  report.mae = mae_metric(pred, truth);
  try {
    report.rho = spearman_rho(pred, truth);
  } catch (const MetricError&) {
    report.rho.reset();  // constant predictions or labels
  }
  if (classification) {
    std::vector<int> pc, tc;
    for (const auto& c : report.clips) {
      pc.push_back(c.rating - 1);
      tc.push_back(c.true_label - 1);
    }
    report.uar = uar(pc, tc, model.spec.classes);
  }
  return report;
}

/// Report CSV: clip_id,true,pred rows plus a trailing summary row.
inline void save_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "clip_id,true,pred\n";
  for (const auto& c : report.clips) {
    out << c.id << ',' << c.true_label << ',' << c.rating << '\n';
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "# summary aggregation=%s mse=%.10g mae=%.10g",
                aggregation_name(report.aggregation), report.mse, report.mae);
  out << buf;
  if (report.rho) {
    std::snprintf(buf, sizeof buf, " rho=%.10g", *report.rho);
    out << buf;
  }
  if (report.uar) {
    std::snprintf(buf, sizeof buf, " uar=%.10g", *report.uar);
    out << buf;
  }
  out << '\n';
}

/// Flat key-value summary.
inline void save_report_summary(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[96];
  out << "clips = " << report.clips.size() << '\n';
  out << "aggregation = " << aggregation_name(report.aggregation) << '\n';
  std::snprintf(buf, sizeof buf, "mse = %.10g\n", report.mse);
  out << buf;
  std::snprintf(buf, sizeof buf, "mae = %.10g\n", report.mae);
  out << buf;
  if (report.rho) {
    std::snprintf(buf, sizeof buf, "rho = %.10g\n", *report.rho);
    out << buf;
  } else {
    out << "rho = undefined\n";
  }
  if (report.uar) {
    std::snprintf(buf, sizeof buf, "uar = %.10g\n", *report.uar);
    out << buf;
  }
}

}  // namespace rawvoice
