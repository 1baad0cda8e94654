#include "rawvoice/layers.hpp"

#include <cmath>
#include <limits>

#include "gtest/gtest.h"
#include "oracles.hpp"
#include "rawvoice/optimizer.hpp"
#include "rawvoice/rng.hpp"

using namespace rawvoice;

namespace {

template <typename S>
Tensor<S> random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                        double hi = 1.0) {
  Tensor<S> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

TEST(Conv1d, SumOfOnes) {
  const Tensor<float> input({1, 1, 5}, std::vector<float>(5, 1.0f));
  const Tensor<float> weights({1, 1, 3}, {1.0f, 1.0f, 1.0f});
  const Tensor<float> bias({1}, {0.0f});
  const auto out = conv1d_forward(input, weights, bias);
  ASSERT_EQ(out.shape, (std::vector<std::size_t>{1, 1, 3}));
  for (float v : out.data) EXPECT_FLOAT_EQ(v, 3.0f);
}

TEST(Conv1d, ShiftedIdentityKernel) {
  const Tensor<float> input({1, 1, 6}, {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f});
  const Tensor<float> weights({1, 1, 3}, {0.0f, 1.0f, 0.0f});
  const Tensor<float> bias({1}, {0.0f});
  const auto out = conv1d_forward(input, weights, bias);
  EXPECT_EQ(out.data, (std::vector<float>{2.0f, 3.0f, 4.0f, 5.0f}));
}

TEST(Conv1d, MatchesTripleLoopOracle) {
  Rng rng(11);
  for (int round = 0; round < 100; ++round) {
    const std::size_t cin = 1 + rng.uniform_int(3);
    const std::size_t cout = 1 + rng.uniform_int(4);
    const std::size_t k = 1 + rng.uniform_int(4);
    const std::size_t n = k + rng.uniform_int(8);
    const std::size_t b = 1 + rng.uniform_int(3);
    const auto input = random_tensor<double>({b, cin, n}, rng);
    const auto weights = random_tensor<double>({cout, cin, k}, rng);
    const auto bias = random_tensor<double>({cout}, rng);
    const auto got = conv1d_forward(input, weights, bias);
    const auto want = oracle::conv1d(input, weights, bias);
    ASSERT_EQ(got.shape, want.shape);
    for (std::size_t i = 0; i < got.numel(); ++i) {
      EXPECT_NEAR(got.data[i], want.data[i], 1e-6);
    }
  }
}

TEST(Conv1d, InputShorterThanKernelRejected) {
  const Tensor<float> input({1, 1, 2}, {1.0f, 2.0f});
  const Tensor<float> weights({1, 1, 3}, {1.0f, 1.0f, 1.0f});
  const Tensor<float> bias({1}, {0.0f});
  EXPECT_THROW(conv1d_forward(input, weights, bias), ShapeError);
}

TEST(MaxPool, PairwiseMax) {
  const Tensor<float> input({1, 1, 4}, {1.0f, 3.0f, 2.0f, 8.0f});
  const auto r = maxpool1d_forward(input, 2);
  EXPECT_EQ(r.out.data, (std::vector<float>{3.0f, 8.0f}));
}

TEST(MaxPool, SizeOneIsIdentity) {
  const Tensor<float> input({1, 2, 3}, {1.0f, -1.0f, 0.5f, 2.0f, 0.0f, -3.0f});
  const auto r = maxpool1d_forward(input, 1);
  EXPECT_EQ(r.out.data, input.data);
}

TEST(MaxPool, TieKeepsFirstOccurrence) {
  const Tensor<float> input({1, 1, 3}, {5.0f, 5.0f, 5.0f});
  const auto r = maxpool1d_forward(input, 3);
  ASSERT_EQ(r.out.data.size(), 1u);
  EXPECT_FLOAT_EQ(r.out.data[0], 5.0f);
  EXPECT_EQ(r.argmax[0], 0u);
}

TEST(MaxPool, RemainderDropped) {
  const Tensor<float> input({1, 1, 7}, {1, 2, 3, 4, 5, 6, 9});
  const auto r = maxpool1d_forward(input, 3);
  EXPECT_EQ(r.out.data, (std::vector<float>{3.0f, 6.0f}));
}

TEST(MaxPool, BackwardRoutesToArgmaxOnly) {
  const Tensor<float> input({1, 1, 4}, {1.0f, 3.0f, 2.0f, 8.0f});
  const auto r = maxpool1d_forward(input, 2);
  const Tensor<float> upstream({1, 1, 2}, {10.0f, 20.0f});
  const auto grad = maxpool1d_backward(r, upstream);
  EXPECT_EQ(grad.data, (std::vector<float>{0.0f, 10.0f, 0.0f, 20.0f}));
}

TEST(BatchNorm, AlreadyNormalizedIsNearIdentity) {
  // per-channel mean 0 and variance 1 over batch-and-time
  const Tensor<float> input({2, 1, 2}, {-1.0f, 1.0f, -1.0f, 1.0f});
  const Tensor<float> gamma({1}, {1.0f});
  const Tensor<float> beta({1}, {0.0f});
  Tensor<float> mean({1});
  Tensor<float> var = Tensor<float>::full({1}, 1.0f);
  const auto out = batchnorm_forward(input, gamma, beta, RunMode::kTrain, mean, var, 0.9,
                                     1e-5);
  for (std::size_t i = 0; i < input.numel(); ++i) {
    EXPECT_NEAR(out.data[i], input.data[i], 1e-3);
  }
}

TEST(BatchNorm, ConstantInputGivesZero) {
  const Tensor<float> input = Tensor<float>::full({2, 1, 3}, 0.7f);
  const Tensor<float> gamma({1}, {1.0f});
  const Tensor<float> beta({1}, {0.0f});
  Tensor<float> mean({1});
  Tensor<float> var = Tensor<float>::full({1}, 1.0f);
  const auto out =
      batchnorm_forward(input, gamma, beta, RunMode::kTrain, mean, var, 0.9, 1e-5);
  for (float v : out.data) EXPECT_NEAR(v, 0.0f, 1e-6f);
}

TEST(BatchNorm, AffineScaleShift) {
  const Tensor<float> input({2, 1, 2}, {-1.0f, 1.0f, -1.0f, 1.0f});
  const Tensor<float> gamma({1}, {2.0f});
  const Tensor<float> beta({1}, {3.0f});
  Tensor<float> mean({1});
  Tensor<float> var = Tensor<float>::full({1}, 1.0f);
  const auto out =
      batchnorm_forward(input, gamma, beta, RunMode::kTrain, mean, var, 0.9, 1e-5);
  for (std::size_t i = 0; i < input.numel(); ++i) {
    EXPECT_NEAR(out.data[i], 2.0f * input.data[i] + 3.0f, 2e-3);
  }
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  Rng rng(5);
  const auto input = random_tensor<double>({4, 3, 16}, rng, -2.0, 3.0);
  const Tensor<double> gamma = Tensor<double>::full({3}, 1.0);
  const Tensor<double> beta({3});
  Tensor<double> mean({3});
  Tensor<double> var = Tensor<double>::full({3}, 1.0);
  const auto out =
      batchnorm_forward(input, gamma, beta, RunMode::kTrain, mean, var, 0.9, 1e-5);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t t = 0; t < 16; ++t) {
        const double v = out.at(b, c, t);
        sum += v;
        sq += v * v;
        ++count;
      }
    }
    const double m = sum / static_cast<double>(count);
    const double v = sq / static_cast<double>(count) - m * m;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-3);
  }
}

TEST(BatchNorm, RunningStatsUpdateAndInferMode) {
  const Tensor<float> input({1, 1, 4}, {2.0f, 2.0f, 6.0f, 6.0f});  // mean 4, var 4
  const Tensor<float> gamma({1}, {1.0f});
  const Tensor<float> beta({1}, {0.0f});
  Tensor<float> mean({1});
  Tensor<float> var = Tensor<float>::full({1}, 1.0f);
  batchnorm_forward(input, gamma, beta, RunMode::kTrain, mean, var, 0.9, 1e-5);
  EXPECT_NEAR(mean.data[0], 0.9f * 0.0f + 0.1f * 4.0f, 1e-6f);
  EXPECT_NEAR(var.data[0], 0.9f * 1.0f + 0.1f * 4.0f, 1e-6f);

  // infer mode must use the running statistics, not the batch ones
  const Tensor<float> probe({1, 1, 1}, {0.4f});
  const auto out =
      batchnorm_forward(probe, gamma, beta, RunMode::kInfer, mean, var, 0.9, 1e-5);
  const double expected = (0.4 - 0.4) / std::sqrt(1.3 + 1e-5);
  EXPECT_NEAR(out.data[0], expected, 1e-6);
}

TEST(Relu, Definition) {
  const Tensor<float> input({3}, {-1.0f, 0.0f, 2.0f});
  const auto out = relu_forward(input);
  EXPECT_EQ(out.data, (std::vector<float>{0.0f, 0.0f, 2.0f}));
}

TEST(Relu, AllNegativeToZero) {
  const Tensor<float> input({4}, {-1.0f, -0.5f, -3.0f, -0.01f});
  for (float v : relu_forward(input).data) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(Relu, AllPositiveIdentity) {
  const Tensor<float> input({3}, {1.0f, 0.5f, 3.0f});
  EXPECT_EQ(relu_forward(input).data, input.data);
}

TEST(Relu, BackwardPassesGradientAtPositiveInput) {
  const Tensor<float> input({3}, {1.0f, 2.0f, 3.0f});
  const Tensor<float> upstream({3}, {0.3f, -0.4f, 0.5f});
  EXPECT_EQ(relu_backward(input, upstream).data, upstream.data);
}

TEST(Dense, IdentityWeights) {
  const Tensor<float> input({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<float> weights({3, 3});
  for (std::size_t i = 0; i < 3; ++i) weights.at(i, i) = 1.0f;
  const Tensor<float> bias({3});
  EXPECT_EQ(dense_forward(input, weights, bias).data, input.data);
}

TEST(Dense, ZeroWeightsGiveBias) {
  const Tensor<float> input({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor<float> weights({3, 2});
  const Tensor<float> bias({2}, {0.5f, -0.5f});
  const auto out = dense_forward(input, weights, bias);
  EXPECT_EQ(out.data, (std::vector<float>{0.5f, -0.5f, 0.5f, -0.5f}));
}

TEST(Dense, MatchesNaiveOracle) {
  Rng rng(13);
  for (int round = 0; round < 100; ++round) {
    const std::size_t b = 1 + rng.uniform_int(4);
    const std::size_t f = 1 + rng.uniform_int(6);
    const std::size_t u = 1 + rng.uniform_int(5);
    const auto input = random_tensor<double>({b, f}, rng);
    const auto weights = random_tensor<double>({f, u}, rng);
    const auto bias = random_tensor<double>({u}, rng);
    const auto got = dense_forward(input, weights, bias);
    const auto want = oracle::dense(input, weights, bias);
    for (std::size_t i = 0; i < got.numel(); ++i) {
      EXPECT_NEAR(got.data[i], want.data[i], 1e-6);
    }
  }
}

TEST(Dense, ShapeMismatchRejected) {
  const Tensor<float> input({2, 3});
  const Tensor<float> weights({4, 2});
  const Tensor<float> bias({2});
  EXPECT_THROW(dense_forward(input, weights, bias), ShapeError);
}

TEST(Dropout, RateZeroIdentityBothModes) {
  Rng rng(1);
  const Tensor<float> input({8}, {1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_EQ(dropout_forward(input, 0.0, RunMode::kTrain, &rng).out.data, input.data);
  EXPECT_EQ(dropout_forward(input, 0.0, RunMode::kInfer, nullptr).out.data, input.data);
}

TEST(Dropout, InferModeIdentity) {
  const Tensor<float> input({4}, {1, 2, 3, 4});
  EXPECT_EQ(dropout_forward(input, 0.5, RunMode::kInfer, nullptr).out.data, input.data);
}

TEST(Dropout, TrainModeExpectationPreserved) {
  Rng rng(99);
  const Tensor<float> input = Tensor<float>::full({100000}, 1.0f);
  const auto r = dropout_forward(input, 0.5, RunMode::kTrain, &rng);
  double mean = 0.0;
  for (float v : r.out.data) mean += v;
  mean /= static_cast<double>(r.out.numel());
  EXPECT_NEAR(mean, 1.0, 0.02);
}

TEST(Dropout, InvalidRateRejected) {
  Rng rng(1);
  const Tensor<float> input({2});
  EXPECT_THROW(dropout_forward(input, 1.0, RunMode::kTrain, &rng), ConfigError);
}

TEST(MseLoss, PerfectPredictionIsZero) {
  const Tensor<float> pred({2, 1}, {3.0f, 4.0f});
  const std::vector<float> target = {3.0f, 4.0f};
  const auto r = mse_loss(pred, std::span<const float>(target));
  EXPECT_DOUBLE_EQ(r.loss, 0.0);
}

TEST(MseLoss, Arithmetic) {
  const Tensor<float> pred({1, 1}, {0.0f});
  const std::vector<float> target = {2.0f};
  const auto r = mse_loss(pred, std::span<const float>(target));
  EXPECT_DOUBLE_EQ(r.loss, 4.0);
  EXPECT_FLOAT_EQ(r.grad.data[0], -4.0f);
}

TEST(MseLoss, TwoElementCase) {
  const Tensor<float> pred({2, 1}, {1.0f, 3.0f});
  const std::vector<float> target = {1.0f, 1.0f};
  const auto r = mse_loss(pred, std::span<const float>(target));
  EXPECT_DOUBLE_EQ(r.loss, 2.0);
  EXPECT_FLOAT_EQ(r.grad.data[0], 0.0f);
  EXPECT_FLOAT_EQ(r.grad.data[1], 2.0f);
}

TEST(SoftmaxCrossEntropy, UniformLogits) {
  const Tensor<float> logits({1, 3});
  const std::vector<int> targets = {1};
  const auto r = softmax_crossentropy(logits, std::span<const int>(targets));
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-6);
}

TEST(SoftmaxCrossEntropy, SaturatedLogitsNearZeroLoss) {
  const Tensor<float> logits({1, 3}, {1000.0f, 0.0f, 0.0f});
  const std::vector<int> targets = {0};
  const auto r = softmax_crossentropy(logits, std::span<const int>(targets));
  EXPECT_NEAR(r.loss, 0.0, 1e-9);
}

TEST(SoftmaxCrossEntropy, MatchesDefinitionalOracle) {
  Rng rng(17);
  for (int round = 0; round < 100; ++round) {
    const std::size_t b = 1 + rng.uniform_int(4);
    const std::size_t k = 2 + rng.uniform_int(4);
    const auto logits = random_tensor<double>({b, k}, rng, -3.0, 3.0);
    std::vector<int> targets(b);
    for (auto& t : targets) t = static_cast<int>(rng.uniform_int(k));
    const auto got = softmax_crossentropy(logits, std::span<const int>(targets));
    EXPECT_NEAR(got.loss, oracle::softmax_crossentropy(logits, targets), 1e-6);
  }
}

TEST(SoftmaxCrossEntropy, IndexOutOfRangeRejected) {
  const Tensor<float> logits({1, 3});
  const std::vector<int> targets = {3};
  EXPECT_THROW(softmax_crossentropy(logits, std::span<const int>(targets)), InputError);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(23);
  const auto logits = random_tensor<float>({5, 4}, rng, -4.0, 4.0);
  const auto probs = softmax(logits);
  for (std::size_t b = 0; b < 5; ++b) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 4; ++k) sum += probs.at(b, k);
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  Tensor<float> param({3}, {1.0f, -2.0f, 3.0f});
  const Tensor<float> before = param;
  AdamState<float> adam({&param}, AdamConfig{});
  for (int i = 0; i < 5; ++i) {
    adam.step({&param}, {Tensor<float>({3})});
  }
  EXPECT_EQ(param.data, before.data);
}

TEST(Adam, FirstStepClosedForm) {
  Tensor<double> param({1}, {0.5});
  AdamConfig cfg;  // lr 0.001, beta1 0.9, beta2 0.999, eps 1e-8
  AdamState<double> adam({&param}, cfg);
  adam.step({&param}, {Tensor<double>({1}, {1.0})});
  // bias-corrected first step: mhat = g, vhat = g^2 -> delta = -lr/(1+eps)
  const double expected = 0.5 - 0.001 / (1.0 + 1e-8);
  EXPECT_NEAR(param.data[0], expected, 1e-12);

  // float instantiation agrees to float precision
  Tensor<float> paramf({1}, {0.5f});
  AdamState<float> adamf({&paramf}, cfg);
  adamf.step({&paramf}, {Tensor<float>({1}, {1.0f})});
  EXPECT_NEAR(paramf.data[0], expected, 1e-7);
}

TEST(Adam, ZeroLearningRateFreezesParameters) {
  Tensor<float> param({2}, {1.0f, 2.0f});
  AdamConfig cfg;
  cfg.lr = 0.0;
  AdamState<float> adam({&param}, cfg);
  Rng rng(3);
  for (int i = 0; i < 4; ++i) {
    Tensor<float> grad({2}, {static_cast<float>(rng.uniform(-1, 1)),
                             static_cast<float>(rng.uniform(-1, 1))});
    adam.step({&param}, {std::move(grad)});
  }
  EXPECT_FLOAT_EQ(param.data[0], 1.0f);
  EXPECT_FLOAT_EQ(param.data[1], 2.0f);
}

TEST(Adam, NonFiniteGradientAborts) {
  Tensor<float> param({1}, {0.5f});
  AdamState<float> adam({&param}, AdamConfig{});
  Tensor<float> bad({1}, {std::numeric_limits<float>::quiet_NaN()});
  EXPECT_THROW(adam.step({&param}, {std::move(bad)}), NumericError);
  EXPECT_FLOAT_EQ(param.data[0], 0.5f);  // parameter untouched
}

}  // namespace
