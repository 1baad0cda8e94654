#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rawvoice/binio.hpp"
#include "rawvoice/error.hpp"
#include "rawvoice/layers.hpp"
#include "rawvoice/rng.hpp"
#include "rawvoice/tensor.hpp"

namespace rawvoice {

enum class HeadKind { kRegression, kClassification };

/// Architecture hyperparameters. The layer stack is
///   conv_blocks x [conv1d -> batchnorm -> relu -> maxpool -> dropout]
///   -> flatten -> dense -> relu -> dropout -> head,
/// where the head is a single linear unit (regression) or a K-unit softmax
/// layer (classification).
struct ModelSpec {
  int sample_rate = 16000;
  double window_size_s = 1.5;
  int conv_blocks = 2;
  int filters_per_conv = 4;
  int kernel_size = 3;
  int pool_size = 4;
  int dense_units = 32;
  double conv_dropout = 0.1;
  double dense_dropout = 0.5;
  HeadKind head = HeadKind::kRegression;
  int classes = 3;  // used by the classification head

  int window_samples() const {
    const double exact = window_size_s * sample_rate;
    const double rounded = std::round(exact);
    if (window_size_s <= 0 || sample_rate <= 0 || std::abs(exact - rounded) > 1e-6 ||
        rounded < 1) {
      throw ConfigError("window size is not a whole sample count");
    }
    return static_cast<int>(rounded);
  }

  int output_units() const { return head == HeadKind::kRegression ? 1 : classes; }

  void validate() const {
    if (conv_blocks < 1 || filters_per_conv < 1 || kernel_size < 1 || pool_size < 1 ||
        dense_units < 1) {
      throw ConfigError("all architecture counts must be positive");
    }
    if (conv_dropout < 0 || conv_dropout >= 1 || dense_dropout < 0 || dense_dropout >= 1) {
      throw ConfigError("dropout rates must be in [0, 1)");
    }
    if (head == HeadKind::kClassification && classes < 2) {
      throw ConfigError("classification head needs at least 2 classes");
    }
    flatten_length();  // throws if the window is too short for the stack
  }

  /// Feature count entering the first dense layer. Throws when any stage
  /// would collapse to length zero, reporting the minimal admissible window.
  int flatten_length() const {
    long n = window_samples();
    for (int b = 0; b < conv_blocks; ++b) {
      n = n - kernel_size + 1;  // valid convolution
      n = n / pool_size;        // non-overlapping pooling, remainder dropped
      if (n < 1) {
        throw ConfigError(
            "window of " + std::to_string(window_samples()) +
            " samples is too short for " + std::to_string(conv_blocks) +
            " conv blocks; minimal admissible window is " +
            std::to_string(min_window_samples()) + " samples (" +
            std::to_string(static_cast<double>(min_window_samples()) / sample_rate) +
            " s at " + std::to_string(sample_rate) + " Hz)");
      }
    }
    return static_cast<int>(n) * filters_per_conv;
  }

  /// Smallest window (in samples) for which every stage keeps length >= 1.
  int min_window_samples() const {
    long n = 1;
    for (int b = 0; b < conv_blocks; ++b) {
      n = n * pool_size;        // floor(m/P) >= n requires m >= n*P
      n = n + kernel_size - 1;  // undo the valid convolution
    }
    return static_cast<int>(n);
  }
};

/// All learned parameters plus batch-norm running statistics.
template <typename S = float>
struct ModelState {
  struct ConvBlock {
    Tensor<S> conv_w;  // [F x C_in x K]
    Tensor<S> conv_b;  // [F]
    Tensor<S> gamma;   // [F]
    Tensor<S> beta;    // [F]
    Tensor<S> running_mean;  // [F]
    Tensor<S> running_var;   // [F]
  };

  ModelSpec spec;
  std::vector<ConvBlock> blocks;
  Tensor<S> dense1_w, dense1_b;  // [flatten x units], [units]
  Tensor<S> dense2_w, dense2_b;  // [units x out], [out]

  /// Trainable parameters in declaration order (running stats excluded).
  std::vector<Tensor<S>*> parameters() {
    std::vector<Tensor<S>*> p;
    for (auto& b : blocks) {
      p.push_back(&b.conv_w);
      p.push_back(&b.conv_b);
      p.push_back(&b.gamma);
      p.push_back(&b.beta);
    }
    p.push_back(&dense1_w);
    p.push_back(&dense1_b);
    p.push_back(&dense2_w);
    p.push_back(&dense2_b);
    return p;
  }

  std::vector<const Tensor<S>*> parameters() const {
    std::vector<const Tensor<S>*> p;
    for (const auto& b : blocks) {
      p.push_back(&b.conv_w);
      p.push_back(&b.conv_b);
      p.push_back(&b.gamma);
      p.push_back(&b.beta);
    }
    p.push_back(&dense1_w);
    p.push_back(&dense1_b);
    p.push_back(&dense2_w);
    p.push_back(&dense2_b);
    return p;
  }

  /// Every tensor in serialization order: parameters, then running stats.
  std::vector<const Tensor<S>*> all_tensors() const {
    auto p = parameters();
    for (const auto& b : blocks) {
      p.push_back(&b.running_mean);
      p.push_back(&b.running_var);
    }
    return p;
  }

  std::vector<Tensor<S>*> all_tensors() {
    auto p = parameters();
    for (auto& b : blocks) {
      p.push_back(&b.running_mean);
      p.push_back(&b.running_var);
    }
    return p;
  }
};

namespace detail {

template <typename S>
Tensor<S> uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  Tensor<S> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace detail

/// Builds a freshly initialized model. Weights are uniform(-b, b) with
/// b = sqrt(6/fan_in); biases 0; batch-norm gamma 1, beta 0, running mean 0,
/// running variance 1.
template <typename S = float>
ModelState<S> build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelState<S> m;
  m.spec = spec;
  Rng rng(derive_seed(seed, 0x1217));

  const auto filters = static_cast<std::size_t>(spec.filters_per_conv);
  const auto k = static_cast<std::size_t>(spec.kernel_size);
  std::size_t channels = 1;
  for (int b = 0; b < spec.conv_blocks; ++b) {
    typename ModelState<S>::ConvBlock blk;
    blk.conv_w = detail::uniform_init<S>({filters, channels, k}, channels * k, rng);
    blk.conv_b = Tensor<S>({filters});
    blk.gamma = Tensor<S>::full({filters}, S(1));
    blk.beta = Tensor<S>({filters});
    blk.running_mean = Tensor<S>({filters});
    blk.running_var = Tensor<S>::full({filters}, S(1));
    m.blocks.push_back(std::move(blk));
    channels = filters;
  }

  const auto flat = static_cast<std::size_t>(spec.flatten_length());
  const auto units = static_cast<std::size_t>(spec.dense_units);
  const auto out = static_cast<std::size_t>(spec.output_units());
  m.dense1_w = detail::uniform_init<S>({flat, units}, flat, rng);
  m.dense1_b = Tensor<S>({units});
  m.dense2_w = detail::uniform_init<S>({units, out}, units, rng);
  m.dense2_b = Tensor<S>({out});
  return m;
}

inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEps = 1e-5;

/// Saved activations of one training forward pass, consumed by backward().
template <typename S>
struct ForwardTrace {
  struct BlockTrace {
    Tensor<S> conv_in;
    Tensor<S> conv_out;
    BatchNormCache<S> bn;
    Tensor<S> bn_out;
    MaxPoolResult<S> pool;
    DropoutResult<S> dropout;
  };
  std::vector<BlockTrace> blocks;
  Tensor<S> dense1_in;   // flattened [B x F]
  Tensor<S> dense1_out;  // pre-activation [B x U]
  DropoutResult<S> dense_dropout;
  Tensor<S> dense2_in;  // post relu+dropout [B x U]
};

namespace detail {

template <typename S>
Tensor<S> flatten_batch(const Tensor<S>& t) {
  // [B x C x N] -> [B x C*N]; data is already contiguous per batch row
  Tensor<S> out;
  out.shape = {t.dim(0), t.dim(1) * t.dim(2)};
  out.data = t.data;
  return out;
}

}  // namespace detail

/// Training forward pass: batch statistics, running-stat updates and seeded
/// dropout. Returns the head output (regression value or logits) and fills
/// the trace for backward().
template <typename S>
Tensor<S> forward_train(ModelState<S>& m, const Tensor<S>& input, Rng& rng,
                        ForwardTrace<S>& trace) {
  if (input.rank() != 3 || input.dim(1) != 1 ||
      input.dim(2) != static_cast<std::size_t>(m.spec.window_samples())) {
    throw ShapeError("model input must be [B x 1 x " +
                     std::to_string(m.spec.window_samples()) + "]");
  }
  trace.blocks.clear();
  trace.blocks.resize(m.blocks.size());

  Tensor<S> x = input;
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    auto& blk = m.blocks[b];
    auto& t = trace.blocks[b];
    t.conv_in = std::move(x);
    t.conv_out = conv1d_forward(t.conv_in, blk.conv_w, blk.conv_b);
    t.bn_out = batchnorm_forward(t.conv_out, blk.gamma, blk.beta, RunMode::kTrain,
                                 blk.running_mean, blk.running_var, kBatchNormMomentum,
                                 kBatchNormEps, &t.bn);
    Tensor<S> activated = relu_forward(t.bn_out);
    t.pool = maxpool1d_forward(activated, static_cast<std::size_t>(m.spec.pool_size));
    t.dropout = dropout_forward(t.pool.out, m.spec.conv_dropout, RunMode::kTrain, &rng);
    x = std::move(t.dropout.out);  // backward only needs the mask
  }

  trace.dense1_in = detail::flatten_batch(x);
  trace.dense1_out = dense_forward(trace.dense1_in, m.dense1_w, m.dense1_b);
  Tensor<S> activated = relu_forward(trace.dense1_out);
  trace.dense_dropout =
      dropout_forward(activated, m.spec.dense_dropout, RunMode::kTrain, &rng);
  trace.dense2_in = trace.dense_dropout.out;
  return dense_forward(trace.dense2_in, m.dense2_w, m.dense2_b);
}

/// Inference forward pass: running statistics, no dropout, never mutates the
/// model. Returns the head output (regression value or logits).
template <typename S>
Tensor<S> forward_infer(const ModelState<S>& m, const Tensor<S>& input) {
  if (input.rank() != 3 || input.dim(1) != 1 ||
      input.dim(2) != static_cast<std::size_t>(m.spec.window_samples())) {
    throw ShapeError("model input must be [B x 1 x " +
                     std::to_string(m.spec.window_samples()) + "]");
  }
  Tensor<S> x = input;
  for (const auto& blk : m.blocks) {
    Tensor<S> conv = conv1d_forward(x, blk.conv_w, blk.conv_b);
    // running stats are const in infer mode; the cast keeps one signature
    auto& mean = const_cast<Tensor<S>&>(blk.running_mean);
    auto& var = const_cast<Tensor<S>&>(blk.running_var);
    Tensor<S> bn = batchnorm_forward(conv, blk.gamma, blk.beta, RunMode::kInfer, mean,
                                     var, kBatchNormMomentum, kBatchNormEps);
    Tensor<S> activated = relu_forward(bn);
    auto pooled = maxpool1d_forward(activated, static_cast<std::size_t>(m.spec.pool_size));
    x = std::move(pooled.out);
  }
  Tensor<S> flat = detail::flatten_batch(x);
  Tensor<S> hidden = relu_forward(dense_forward(flat, m.dense1_w, m.dense1_b));
  return dense_forward(hidden, m.dense2_w, m.dense2_b);
}

/// The model operation from the user's point of view: regression returns
/// [B x 1] raw predictions, classification returns [B x K] probabilities.
template <typename S>
Tensor<S> forward(ModelState<S>& m, const Tensor<S>& input, RunMode mode,
                  Rng* rng = nullptr) {
  Tensor<S> head;
  if (mode == RunMode::kTrain) {
    if (!rng) throw ConfigError("train-mode forward requires a generator");
    ForwardTrace<S> trace;
    head = forward_train(m, input, *rng, trace);
  } else {
    head = forward_infer(m, input);
  }
  return m.spec.head == HeadKind::kClassification ? softmax(head) : head;
}

/// Analytic gradients for every trainable parameter, in parameters() order.
/// `upstream` is the gradient with respect to the head output of
/// forward_train.
template <typename S>
std::vector<Tensor<S>> backward(const ModelState<S>& m, const ForwardTrace<S>& trace,
                                const Tensor<S>& upstream) {
  std::vector<Tensor<S>> grads(4 * m.blocks.size() + 4);

  auto d2 = dense_backward(trace.dense2_in, m.dense2_w, upstream);
  grads[4 * m.blocks.size() + 2] = std::move(d2.weights);
  grads[4 * m.blocks.size() + 3] = std::move(d2.bias);

  dropout_backward_inplace(trace.dense_dropout, m.spec.dense_dropout, d2.input);
  relu_backward_inplace(trace.dense1_out, d2.input);
  auto d1 = dense_backward(trace.dense1_in, m.dense1_w, d2.input);
  grads[4 * m.blocks.size() + 0] = std::move(d1.weights);
  grads[4 * m.blocks.size() + 1] = std::move(d1.bias);

  // unflatten to the last block's pooled shape
  Tensor<S> dx;
  dx.shape = trace.blocks.back().pool.out.shape;
  dx.data = std::move(d1.input.data);

  for (std::size_t i = m.blocks.size(); i-- > 0;) {
    const auto& blk = m.blocks[i];
    const auto& t = trace.blocks[i];
    dropout_backward_inplace(t.dropout, m.spec.conv_dropout, dx);
    dx = maxpool1d_backward(t.pool, dx);
    relu_backward_inplace(t.bn_out, dx);
    auto bn = batchnorm_backward_inplace(t.bn, blk.gamma, dx);
    grads[4 * i + 2] = std::move(bn.gamma);
    grads[4 * i + 3] = std::move(bn.beta);
    auto conv = conv1d_backward(t.conv_in, blk.conv_w, dx, /*need_input_grad=*/i > 0);
    grads[4 * i + 0] = std::move(conv.weights);
    grads[4 * i + 1] = std::move(conv.bias);
    dx = std::move(conv.input);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Model file: magic "RVM1", u16 format version, the spec, then every tensor
// (u8 rank, u32 dims, f32 payload) in declaration order, then a CRC32 of all
// preceding bytes.

inline constexpr std::uint16_t kModelFormatVersion = 1;

namespace detail {

inline void spec_to_stream(std::ostream& out, const ModelSpec& s) {
  put_u32(out, static_cast<std::uint32_t>(s.sample_rate));
  put_f64(out, s.window_size_s);
  put_u32(out, static_cast<std::uint32_t>(s.conv_blocks));
  put_u32(out, static_cast<std::uint32_t>(s.filters_per_conv));
  put_u32(out, static_cast<std::uint32_t>(s.kernel_size));
  put_u32(out, static_cast<std::uint32_t>(s.pool_size));
  put_u32(out, static_cast<std::uint32_t>(s.dense_units));
  put_f64(out, s.conv_dropout);
  put_f64(out, s.dense_dropout);
  out.put(s.head == HeadKind::kRegression ? 0 : 1);
  put_u32(out, static_cast<std::uint32_t>(s.classes));
}

inline ModelSpec spec_from_stream(std::istream& in) {
  ModelSpec s;
  s.sample_rate = static_cast<int>(get_u32(in, "spec sample rate"));
  s.window_size_s = get_f64(in, "spec window size");
  s.conv_blocks = static_cast<int>(get_u32(in, "spec conv blocks"));
  s.filters_per_conv = static_cast<int>(get_u32(in, "spec filters"));
  s.kernel_size = static_cast<int>(get_u32(in, "spec kernel"));
  s.pool_size = static_cast<int>(get_u32(in, "spec pool"));
  s.dense_units = static_cast<int>(get_u32(in, "spec dense units"));
  s.conv_dropout = get_f64(in, "spec conv dropout");
  s.dense_dropout = get_f64(in, "spec dense dropout");
  const int head = in.get();
  if (head != 0 && head != 1) throw CorruptionError("invalid head kind in model file");
  s.head = head == 0 ? HeadKind::kRegression : HeadKind::kClassification;
  s.classes = static_cast<int>(get_u32(in, "spec classes"));
  return s;
}

}  // namespace detail

template <typename S>
void save_model(const ModelState<S>& m, const std::filesystem::path& path) {
  std::ostringstream body(std::ios::binary);
  body.write("RVM1", 4);
  detail::put_u16(body, kModelFormatVersion);
  detail::spec_to_stream(body, m.spec);
  for (const Tensor<S>* t : m.all_tensors()) {
    body.put(static_cast<char>(t->rank()));
    for (std::size_t d : t->shape) detail::put_u32(body, static_cast<std::uint32_t>(d));
    for (const S v : t->data) detail::put_f32(body, static_cast<float>(v));
  }
  const std::string bytes = body.str();
  detail::Crc32 crc;
  crc.update(bytes.data(), bytes.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  detail::put_u32(out, crc.value());
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename S = float>
ModelState<S> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream whole(std::ios::binary);
  whole << in.rdbuf();
  const std::string bytes = whole.str();
  if (bytes.size() < 10) throw CorruptionError(path.string() + ": file too small");
  if (bytes.compare(0, 4, "RVM1") != 0) {
    throw FormatError(path.string() + ": not a model file (bad magic)");
  }
  detail::Crc32 crc;
  crc.update(bytes.data(), bytes.size() - 4);
  std::istringstream tail(bytes.substr(bytes.size() - 4), std::ios::binary);
  const std::uint32_t stored = detail::get_u32(tail, "checksum");
  if (crc.value() != stored) {
    throw CorruptionError(path.string() + ": checksum mismatch");
  }

  std::istringstream body(bytes.substr(4, bytes.size() - 8), std::ios::binary);
  const std::uint16_t version = detail::get_u16(body, "format version");
  if (version != kModelFormatVersion) {
    throw FormatError(path.string() + ": unsupported model format version " +
                      std::to_string(version));
  }
  ModelState<S> m;
  m.spec = detail::spec_from_stream(body);
  m.spec.validate();
  m.blocks.resize(static_cast<std::size_t>(m.spec.conv_blocks));

  auto read_tensor = [&body, &path](Tensor<S>& t) {
    const int rank = body.get();
    if (rank < 1 || rank > 4) throw CorruptionError(path.string() + ": bad tensor rank");
    std::vector<std::size_t> shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) d = detail::get_u32(body, "tensor dim");
    t = Tensor<S>(shape);
    for (auto& v : t.data) v = static_cast<S>(detail::get_f32(body, "tensor payload"));
  };
  for (Tensor<S>* t : m.all_tensors()) read_tensor(*t);

  // verify shapes against the spec
  ModelState<S> ref = build_model<S>(m.spec, 0);
  auto got = m.all_tensors();
  auto want = ref.all_tensors();
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (got[i]->shape != want[i]->shape) {
      throw CorruptionError(path.string() + ": tensor shape does not match spec");
    }
  }
  return m;
}

}  // namespace rawvoice
