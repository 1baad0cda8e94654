#include "rawvoice/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <utility>

#include "gtest/gtest.h"
#include "rawvoice/rng.hpp"

namespace fs = std::filesystem;
using namespace rawvoice;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "rawvoice_train_test";
  fs::create_directories(dir);
  return dir;
}

ModelSpec small_spec() {
  ModelSpec spec;
  spec.sample_rate = 1000;
  spec.window_size_s = 0.064;
  return spec;
}

// Learnable toy task: window mean encodes the label.
std::vector<WindowSample> toy_windows(int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<WindowSample> ws(static_cast<std::size_t>(count));
  for (auto& w : ws) {
    const int label = 1 + static_cast<int>(rng.uniform_int(9));
    w.label = static_cast<float>(label);
    w.samples.resize(64);
    const float level = static_cast<float>(label) / 10.0f;
    for (auto& s : w.samples) {
      s = level + static_cast<float>(rng.uniform(-0.05, 0.05));
    }
  }
  return ws;
}

std::vector<char> file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Train, ZeroLearningRateChangesNothing) {
  const auto windows = toy_windows(32, 1);
  auto model = build_model<float>(small_spec(), 2);
  std::vector<std::vector<float>> before;
  for (const auto* p : std::as_const(model).parameters()) before.push_back(p->data);

  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 3;
  cfg.lr = 0.0;
  cfg.seed = 7;
  cfg.checkpoint_path = temp_dir() / "zero_lr.rvm";
  const auto result = train(model, windows, windows, cfg);

  const auto after = std::as_const(result.best_model).parameters();
  for (std::size_t i = 0; i < after.size(); ++i) {
    EXPECT_EQ(after[i]->data, before[i]) << "parameter " << i;
  }
}

TEST(Train, SameSeedBitIdenticalRun) {
  const auto train_set = toy_windows(96, 2);
  const auto dev_set = toy_windows(32, 3);
  const auto model = build_model<float>(small_spec(), 4);

  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 3;
  cfg.seed = 11;
  cfg.checkpoint_path = temp_dir() / "det_a.rvm";
  const auto a = train(model, train_set, dev_set, cfg);
  cfg.checkpoint_path = temp_dir() / "det_b.rvm";
  const auto b = train(model, train_set, dev_set, cfg);

  EXPECT_EQ(file_bytes(temp_dir() / "det_a.rvm"), file_bytes(temp_dir() / "det_b.rvm"));
  ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    EXPECT_EQ(a.history.epochs[i].train_loss, b.history.epochs[i].train_loss);
    EXPECT_EQ(a.history.epochs[i].dev_loss, b.history.epochs[i].dev_loss);
  }
  EXPECT_EQ(a.history.best_epoch, b.history.best_epoch);
}

TEST(Train, BestCheckpointIsDevMinimum) {
  const auto train_set = toy_windows(128, 5);
  const auto dev_set = toy_windows(48, 6);
  const auto model = build_model<float>(small_spec(), 7);

  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 6;
  cfg.lr = 0.01;
  cfg.seed = 13;
  cfg.checkpoint_path = temp_dir() / "best.rvm";
  const auto result = train(model, train_set, dev_set, cfg);

  ASSERT_EQ(result.history.epochs.size(), 6u);
  double min_dev = std::numeric_limits<double>::infinity();
  int argmin = 0;
  for (std::size_t i = 0; i < result.history.epochs.size(); ++i) {
    if (result.history.epochs[i].dev_loss < min_dev) {
      min_dev = result.history.epochs[i].dev_loss;
      argmin = static_cast<int>(i) + 1;
    }
  }
  EXPECT_EQ(result.history.best_epoch, argmin);
  // the returned model reproduces the recorded best dev loss
  EXPECT_NEAR(evaluate_loss(result.best_model, dev_set, cfg.batch_size), min_dev, 1e-6);
}

// Memorization sanity run: 64 copies of one (window, label) pair must be
// drivable to near-zero error. The 8-step budget of the published
// configuration cannot move a fresh model's output to a KSS target (Adam
// steps are bounded by the learning rate), and dropout keeps an MSE noise
// floor of ~0.3 on a single sample, so this sanity check runs with the
// stochastic regularizers off and an extended epoch budget.
TEST(Train, MemorizesSinglePairWithEnoughEpochs) {
  Rng rng(17);
  WindowSample w;
  w.label = 5.0f;
  w.samples.resize(64);
  for (auto& s : w.samples) s = static_cast<float>(rng.uniform(-1.0, 1.0));
  const std::vector<WindowSample> windows(64, w);

  ModelSpec spec = small_spec();
  spec.conv_dropout = 0.0;
  spec.dense_dropout = 0.0;

  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 300;
  cfg.seed = 19;
  cfg.checkpoint_path = temp_dir() / "memorize.rvm";
  const auto result = train(build_model<float>(spec, 20), windows, windows, cfg);
  const double dev_mse = evaluate_loss(result.best_model, windows, 64);
  EXPECT_LT(dev_mse, 0.01);
}

TEST(Train, LossDecreasesOnLearnableTask) {
  const auto train_set = toy_windows(256, 8);
  const auto dev_set = toy_windows(64, 9);

  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 8;
  cfg.seed = 23;
  cfg.checkpoint_path = temp_dir() / "learn.rvm";
  const auto result = train(build_model<float>(small_spec(), 24), train_set, dev_set, cfg);
  EXPECT_LT(result.history.epochs.back().train_loss, result.history.epochs.front().train_loss);
}

TEST(Train, EmptyDatasetRejected) {
  TrainConfig cfg;
  cfg.checkpoint_path = temp_dir() / "none.rvm";
  const auto model = build_model<float>(small_spec(), 3);
  EXPECT_THROW(train(model, {}, toy_windows(4, 1), cfg), ConfigError);
  EXPECT_THROW(train(model, toy_windows(4, 1), {}, cfg), ConfigError);
}

TEST(Train, MissingCheckpointPathRejected) {
  TrainConfig cfg;
  const auto model = build_model<float>(small_spec(), 3);
  EXPECT_THROW(train(model, toy_windows(4, 1), toy_windows(4, 2), cfg), ConfigError);
}

TEST(Train, WindowLengthMismatchRejected) {
  TrainConfig cfg;
  cfg.checkpoint_path = temp_dir() / "mismatch.rvm";
  auto windows = toy_windows(8, 1);
  for (auto& w : windows) w.samples.resize(32);
  const auto model = build_model<float>(small_spec(), 3);
  EXPECT_THROW(train(model, windows, windows, cfg), ShapeError);
}

TEST(EvaluateLoss, ZeroHeadModelAgainstConstantLabels) {
  auto model = build_model<float>(small_spec(), 25);
  std::fill(model.dense2_w.data.begin(), model.dense2_w.data.end(), 0.0f);
  std::fill(model.dense2_b.data.begin(), model.dense2_b.data.end(), 0.0f);
  auto windows = toy_windows(16, 10);
  for (auto& w : windows) w.label = 5.0f;
  EXPECT_DOUBLE_EQ(evaluate_loss(model, windows, 8), 25.0);
}

TEST(EvaluateLoss, IndependentOfBatchSize) {
  const auto model = build_model<float>(small_spec(), 26);
  const auto windows = toy_windows(37, 11);  // deliberately not a batch multiple
  const double a = evaluate_loss(model, windows, 1);
  const double b = evaluate_loss(model, windows, 64);
  EXPECT_NEAR(a, b, 1e-5);
}

TEST(EvaluateLoss, UniformLogitsGiveLnThree) {
  ModelSpec spec = small_spec();
  spec.head = HeadKind::kClassification;
  spec.classes = 3;
  auto model = build_model<float>(spec, 27);
  // zero head weights -> identical logits -> uniform softmax
  std::fill(model.dense2_w.data.begin(), model.dense2_w.data.end(), 0.0f);
  std::fill(model.dense2_b.data.begin(), model.dense2_b.data.end(), 0.0f);
  auto windows = toy_windows(12, 12);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    windows[i].label = 1.0f + static_cast<float>(i % 3);
  }
  const double loss = evaluate_loss(model, windows, 4);
  EXPECT_NEAR(loss, std::log(3.0), 1e-6);
}

TEST(History, CsvShape) {
  TrainHistory h;
  h.epochs = {{1.5, 2.5, 0.1}, {1.0, 2.0, 0.2}};
  h.best_epoch = 2;
  const auto path = temp_dir() / "history.csv";
  save_history_csv(h, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,train_loss,dev_loss,seconds");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 8), "1,1.5,2.");
}

}  // namespace
