#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rawvoice/dataset.hpp"
#include "rawvoice/error.hpp"
#include "rawvoice/model.hpp"
#include "rawvoice/optimizer.hpp"

namespace rawvoice {

struct TrainConfig {
  int batch_size = 64;
  int epochs = 8;
  double lr = 0.001;
  std::uint64_t seed = 42;
  std::filesystem::path checkpoint_path;
  bool shuffle = true;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (lr < 0) throw ConfigError("learning rate must be >= 0");
    if (checkpoint_path.empty()) throw ConfigError("checkpoint path must be set");
  }
};

struct EpochRecord {
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based index of the minimum dev loss
};

struct TrainResult {
  ModelState<float> best_model;
  TrainHistory history;
};

namespace detail {

/// Copies a batch of windows into a [B x 1 x N] tensor.
inline Tensor<float> assemble_batch(const std::vector<WindowSample>& windows,
                                    std::span<const std::size_t> indices,
                                    std::size_t window_len) {
  Tensor<float> batch({indices.size(), 1, window_len});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& w = windows[indices[i]];
    if (w.samples.size() != window_len) {
      throw ShapeError("window length " + std::to_string(w.samples.size()) +
                       " does not match model input " + std::to_string(window_len));
    }
    std::copy(w.samples.begin(), w.samples.end(), &batch.data[i * window_len]);
  }
  return batch;
}

inline int class_target(float label, int classes) {
  const int cls = static_cast<int>(std::lround(label)) - 1;
  if (cls < 0 || cls >= classes) {
    throw InputError("label " + std::to_string(label) +
                     " does not map onto classes 0.." + std::to_string(classes - 1));
  }
  return cls;
}

/// Loss and gradient for one batch of head outputs.
inline LossResult<float> batch_loss(const ModelSpec& spec, const Tensor<float>& head,
                                    const std::vector<WindowSample>& windows,
                                    std::span<const std::size_t> indices) {
  if (spec.head == HeadKind::kRegression) {
    std::vector<float> targets(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) targets[i] = windows[indices[i]].label;
    return mse_loss(head, std::span<const float>(targets));
  }
  std::vector<int> targets(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    targets[i] = class_target(windows[indices[i]].label, spec.classes);
  }
  return softmax_crossentropy(head, std::span<const int>(targets));
}

}  // namespace detail

/// Mean infer-mode loss over all windows. The result is a per-window mean,
/// so it does not depend on the batch size.
inline double evaluate_loss(const ModelState<float>& model,
                            const std::vector<WindowSample>& windows, int batch_size) {
  if (windows.empty()) throw ConfigError("cannot evaluate on an empty window set");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  const auto window_len = static_cast<std::size_t>(model.spec.window_samples());

  double total = 0.0;
  std::vector<std::size_t> indices(windows.size());
  std::iota(indices.begin(), indices.end(), 0);
  for (std::size_t start = 0; start < windows.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t count =
        std::min<std::size_t>(static_cast<std::size_t>(batch_size), windows.size() - start);
    const std::span<const std::size_t> batch_idx(indices.data() + start, count);
    const Tensor<float> input = detail::assemble_batch(windows, batch_idx, window_len);
    const Tensor<float> head = forward_infer(model, input);
    const auto loss = detail::batch_loss(model.spec, head, windows, batch_idx);
    total += loss.loss * static_cast<double>(count);
  }
  return total / static_cast<double>(windows.size());
}

/// Seeded mini-batch training with per-epoch dev monitoring. A checkpoint is
/// written whenever the dev loss improves; the returned model is re-read from
/// that checkpoint, so it is exactly the best epoch, not the last.
inline TrainResult train(ModelState<float> model,
                         const std::vector<WindowSample>& train_windows,
                         const std::vector<WindowSample>& dev_windows,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train_windows.empty() || dev_windows.empty()) {
    throw ConfigError("training and dev window sets must be non-empty");
  }
  const auto window_len = static_cast<std::size_t>(model.spec.window_samples());

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamState<float> adam(model.parameters(), adam_cfg);

  TrainHistory history;
  double best_dev = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    if (cfg.shuffle) {
      Rng shuffle_rng(derive_seed(cfg.seed, 0x5f17, static_cast<std::uint64_t>(epoch)));
      shuffle_rng.shuffle(order);
    }

    double train_loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t count = std::min<std::size_t>(
          static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      const std::span<const std::size_t> batch_idx(order.data() + start, count);
      try {
        const Tensor<float> input =
            detail::assemble_batch(train_windows, batch_idx, window_len);
        Rng dropout_rng(derive_seed(cfg.seed, 0xd801,
                                    (static_cast<std::uint64_t>(epoch) << 32) |
                                        static_cast<std::uint64_t>(batch_index)));
        ForwardTrace<float> trace;
        const Tensor<float> head = forward_train(model, input, dropout_rng, trace);
        const auto loss = detail::batch_loss(model.spec, head, train_windows, batch_idx);
        if (!std::isfinite(loss.loss)) throw NumericError("non-finite training loss");
        train_loss_sum += loss.loss * static_cast<double>(count);
        const auto grads = backward(model, trace, loss.grad);
        adam.step(model.parameters(), grads);
      } catch (const NumericError& err) {
        throw NumericError("numeric failure at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index) + ": " + err.what());
      }
    }

    EpochRecord rec;
    rec.train_loss = train_loss_sum / static_cast<double>(train_windows.size());
    rec.dev_loss = evaluate_loss(model, dev_windows, cfg.batch_size);
    if (rec.dev_loss < best_dev) {
      best_dev = rec.dev_loss;
      history.best_epoch = epoch;
      save_model(model, cfg.checkpoint_path);
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    history.epochs.push_back(rec);
  }

  TrainResult result;
  result.history = std::move(history);
  result.best_model = load_model<float>(cfg.checkpoint_path);
  return result;
}

/// History CSV: epoch,train_loss,dev_loss,seconds.
inline void save_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,dev_loss,seconds\n";
  char buf[128];
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const auto& e = history.epochs[i];
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.3f\n", i + 1, e.train_loss,
                  e.dev_loss, e.seconds);
    out << buf;
  }
  out << "# best_epoch," << history.best_epoch << "\n";
}

}  // namespace rawvoice
