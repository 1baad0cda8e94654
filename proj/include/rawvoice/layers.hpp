#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rawvoice/error.hpp"
#include "rawvoice/rng.hpp"
#include "rawvoice/tensor.hpp"

// Forward and backward passes for every layer the model needs. All ops are
// pure functions over tensors; whatever a backward pass needs is returned by
// the forward pass and handed back explicitly, so gradients can only be
// requested for a forward pass that actually ran.

namespace rawvoice {

namespace detail {

// Reductions with eight explicit accumulator lanes. Strict floating-point
// semantics forbid the compiler from reassociating a single-accumulator
// chain; the fixed lane split makes the order deterministic and SIMD-able.

template <typename S>
double lane_sum(const S* p, std::size_t n) {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t t = 0;
  for (; t + 8 <= n; t += 8) {
    for (int l = 0; l < 8; ++l) lanes[l] += p[t + static_cast<std::size_t>(l)];
  }
  for (; t < n; ++t) lanes[t % 8] += p[t];
  return ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) +
         ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
}

template <typename S>
double lane_sumsqdev(const S* p, std::size_t n, double mean) {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t t = 0;
  for (; t + 8 <= n; t += 8) {
    for (int l = 0; l < 8; ++l) {
      const double d = p[t + static_cast<std::size_t>(l)] - mean;
      lanes[l] += d * d;
    }
  }
  for (; t < n; ++t) {
    const double d = p[t] - mean;
    lanes[t % 8] += d * d;
  }
  return ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) +
         ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
}

template <typename S>
S lane_dot(const S* a, const S* b, std::size_t n) {
  S lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t t = 0;
  for (; t + 8 <= n; t += 8) {
    for (int l = 0; l < 8; ++l) {
      lanes[l] += a[t + static_cast<std::size_t>(l)] * b[t + static_cast<std::size_t>(l)];
    }
  }
  for (; t < n; ++t) lanes[t % 8] += a[t] * b[t];
  return ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) +
         ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
}

/// Three shifted dot products in one pass: out[j] = sum_t a[t+j] * b[t].
template <typename S>
void lane_dot3(const S* a, const S* b, std::size_t n, S out[3]) {
  S l0[4] = {0, 0, 0, 0}, l1[4] = {0, 0, 0, 0}, l2[4] = {0, 0, 0, 0};
  std::size_t t = 0;
  for (; t + 4 <= n; t += 4) {
    for (int l = 0; l < 4; ++l) {
      const S u = b[t + static_cast<std::size_t>(l)];
      l0[l] += a[t + static_cast<std::size_t>(l)] * u;
      l1[l] += a[t + static_cast<std::size_t>(l) + 1] * u;
      l2[l] += a[t + static_cast<std::size_t>(l) + 2] * u;
    }
  }
  for (; t < n; ++t) {
    const S u = b[t];
    l0[t % 4] += a[t] * u;
    l1[t % 4] += a[t + 1] * u;
    l2[t % 4] += a[t + 2] * u;
  }
  out[0] = (l0[0] + l0[2]) + (l0[1] + l0[3]);
  out[1] = (l1[0] + l1[2]) + (l1[1] + l1[3]);
  out[2] = (l2[0] + l2[2]) + (l2[1] + l2[3]);
}

template <typename S>
double lane_dot_f64(const S* a, const S* b, std::size_t n) {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t t = 0;
  for (; t + 8 <= n; t += 8) {
    for (int l = 0; l < 8; ++l) {
      lanes[l] += static_cast<double>(a[t + static_cast<std::size_t>(l)]) *
                  b[t + static_cast<std::size_t>(l)];
    }
  }
  for (; t < n; ++t) lanes[t % 8] += static_cast<double>(a[t]) * b[t];
  return ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) +
         ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 1D convolution (valid, implemented as cross-correlation)

/// input [B x C_in x N], weights [C_out x C_in x K], bias [C_out]
/// -> [B x C_out x (N-K+1)]
template <typename S>
Tensor<S> conv1d_forward(const Tensor<S>& input, const Tensor<S>& weights,
                         const Tensor<S>& bias) {
  if (input.rank() != 3 || weights.rank() != 3 || bias.rank() != 1) {
    throw ShapeError("conv1d expects input [B x C x N], weights [O x C x K], bias [O]");
  }
  const std::size_t batch = input.dim(0), cin = input.dim(1), n = input.dim(2);
  const std::size_t cout = weights.dim(0), k = weights.dim(2);
  if (weights.dim(1) != cin) throw ShapeError("conv1d channel mismatch");
  if (bias.dim(0) != cout) throw ShapeError("conv1d bias size mismatch");
  if (n < k) {
    throw ShapeError("conv1d input length " + std::to_string(n) +
                     " shorter than kernel " + std::to_string(k));
  }
  const std::size_t out_n = n - k + 1;

  Tensor<S> out({batch, cout, out_n});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < cout; ++o) {
      S* dst = &out.data[(b * cout + o) * out_n];
      std::fill(dst, dst + out_n, bias.data[o]);
      for (std::size_t c = 0; c < cin; ++c) {
        const S* src = &input.data[(b * cin + c) * n];
        const S* w = &weights.data[(o * cin + c) * k];
        if (k == 3) {  // fast path for the default kernel size
          const S w0 = w[0], w1 = w[1], w2 = w[2];
          for (std::size_t t = 0; t < out_n; ++t) {
            dst[t] += w0 * src[t] + w1 * src[t + 1] + w2 * src[t + 2];
          }
        } else {
          for (std::size_t j = 0; j < k; ++j) {
            const S wj = w[j];
            const S* s = src + j;
            for (std::size_t t = 0; t < out_n; ++t) dst[t] += wj * s[t];
          }
        }
      }
    }
  }
  return out;
}

template <typename S>
struct Conv1dGrads {
  Tensor<S> weights;
  Tensor<S> bias;
  Tensor<S> input;
};

template <typename S>
Conv1dGrads<S> conv1d_backward(const Tensor<S>& input, const Tensor<S>& weights,
                               const Tensor<S>& upstream, bool need_input_grad = true) {
  const std::size_t batch = input.dim(0), cin = input.dim(1), n = input.dim(2);
  const std::size_t cout = weights.dim(0), k = weights.dim(2);
  const std::size_t out_n = n - k + 1;
  if (upstream.shape != std::vector<std::size_t>{batch, cout, out_n}) {
    throw ShapeError("conv1d upstream gradient shape mismatch");
  }

  Conv1dGrads<S> g;
  g.weights = Tensor<S>({cout, cin, k});
  g.bias = Tensor<S>({cout});
  if (need_input_grad) g.input = Tensor<S>({batch, cin, n});

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < cout; ++o) {
      const S* up = &upstream.data[(b * cout + o) * out_n];
      S bias_acc = 0;
      for (std::size_t t = 0; t < out_n; ++t) bias_acc += up[t];
      g.bias.data[o] += bias_acc;
      for (std::size_t c = 0; c < cin; ++c) {
        const S* src = &input.data[(b * cin + c) * n];
        S* gw = &g.weights.data[(o * cin + c) * k];
        if (k == 3) {
          S taps[3];
          detail::lane_dot3(src, up, out_n, taps);
          gw[0] += taps[0];
          gw[1] += taps[1];
          gw[2] += taps[2];
        } else {
          for (std::size_t j = 0; j < k; ++j) {
            gw[j] += detail::lane_dot(src + j, up, out_n);
          }
        }
        if (need_input_grad) {
          S* gi = &g.input.data[(b * cin + c) * n];
          const S* w = &weights.data[(o * cin + c) * k];
          if (k == 3) {
            const S w0 = w[0], w1 = w[1], w2 = w[2];
            // edges first, then the fused interior (out_n >= 1 and n = out_n+2)
            gi[0] += w0 * up[0];
            if (out_n >= 2) {
              gi[1] += w1 * up[0] + w0 * up[1];
            } else {
              gi[1] += w1 * up[0];
            }
            for (std::size_t t = 2; t < out_n; ++t) {
              gi[t] += w2 * up[t - 2] + w1 * up[t - 1] + w0 * up[t];
            }
            if (out_n >= 2) gi[n - 2] += w2 * up[out_n - 2] + w1 * up[out_n - 1];
            gi[n - 1] += w2 * up[out_n - 1];
          } else {
            for (std::size_t j = 0; j < k; ++j) {
              const S wj = w[j];
              S* d = gi + j;
              for (std::size_t t = 0; t < out_n; ++t) d[t] += wj * up[t];
            }
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Max pooling (non-overlapping, trailing remainder dropped)

template <typename S>
struct MaxPoolResult {
  Tensor<S> out;                     // [B x C x floor(N/P)]
  std::vector<std::uint32_t> argmax; // flat input index per output element
  std::vector<std::size_t> input_shape;
};

template <typename S>
MaxPoolResult<S> maxpool1d_forward(const Tensor<S>& input, std::size_t pool) {
  if (input.rank() != 3) throw ShapeError("maxpool1d expects [B x C x N]");
  const std::size_t batch = input.dim(0), ch = input.dim(1), n = input.dim(2);
  if (pool < 1 || n < pool) {
    throw ShapeError("maxpool1d input length " + std::to_string(n) +
                     " shorter than pool " + std::to_string(pool));
  }
  const std::size_t out_n = n / pool;

  MaxPoolResult<S> r;
  r.out = Tensor<S>({batch, ch, out_n});
  r.argmax.resize(batch * ch * out_n);
  r.input_shape = input.shape;
  std::size_t oi = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const S* src = &input.data[(b * ch + c) * n];
      for (std::size_t t = 0; t < out_n; ++t, ++oi) {
        const std::size_t base = t * pool;
        S best = src[base];
        std::size_t best_i = base;
        for (std::size_t j = 1; j < pool; ++j) {
          // strict comparison: ties keep the first occurrence
          if (src[base + j] > best) {
            best = src[base + j];
            best_i = base + j;
          }
        }
        r.out.data[oi] = best;
        r.argmax[oi] = static_cast<std::uint32_t>((b * ch + c) * n + best_i);
      }
    }
  }
  return r;
}

/// Routes each upstream gradient to the recorded argmax position.
template <typename S>
Tensor<S> maxpool1d_backward(const MaxPoolResult<S>& fwd, const Tensor<S>& upstream) {
  if (upstream.numel() != fwd.argmax.size()) {
    throw ShapeError("maxpool1d upstream gradient size mismatch");
  }
  Tensor<S> grad(fwd.input_shape);
  for (std::size_t i = 0; i < fwd.argmax.size(); ++i) {
    grad.data[fwd.argmax[i]] += upstream.data[i];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Batch normalization over [B x C x N], statistics per channel

enum class RunMode { kTrain, kInfer };

template <typename S>
struct BatchNormCache {
  Tensor<S> xhat;               // normalized input (train mode only)
  std::vector<double> inv_std;  // per channel
};

/// Train mode normalizes with batch statistics over batch-and-time and
/// updates the running stats as run <- momentum*run + (1-momentum)*batch.
/// Infer mode normalizes with the running statistics.
template <typename S>
Tensor<S> batchnorm_forward(const Tensor<S>& input, const Tensor<S>& gamma,
                            const Tensor<S>& beta, RunMode mode,
                            Tensor<S>& running_mean, Tensor<S>& running_var,
                            double momentum, double eps,
                            BatchNormCache<S>* cache = nullptr) {
  if (input.rank() != 3) throw ShapeError("batchnorm expects [B x C x N]");
  const std::size_t batch = input.dim(0), ch = input.dim(1), n = input.dim(2);
  if (batch == 0) throw ShapeError("batchnorm requires a non-empty batch");
  if (gamma.dim(0) != ch || beta.dim(0) != ch) throw ShapeError("batchnorm scale shape mismatch");

  Tensor<S> out(input.shape);
  const std::size_t m = batch * n;  // elements per channel

  for (std::size_t c = 0; c < ch; ++c) {
    double mean, var;
    if (mode == RunMode::kTrain) {
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        acc += detail::lane_sum(&input.data[(b * ch + c) * n], n);
      }
      mean = acc / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        sq += detail::lane_sumsqdev(&input.data[(b * ch + c) * n], n, mean);
      }
      var = sq / static_cast<double>(m);
      running_mean.data[c] = static_cast<S>(momentum * running_mean.data[c] + (1.0 - momentum) * mean);
      running_var.data[c] = static_cast<S>(momentum * running_var.data[c] + (1.0 - momentum) * var);
    } else {
      mean = running_mean.data[c];
      var = running_var.data[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + eps);
    const S g = gamma.data[c], bta = beta.data[c];
    if (cache) {
      if (cache->xhat.shape != input.shape) cache->xhat = Tensor<S>(input.shape);
      if (cache->inv_std.size() != ch) cache->inv_std.resize(ch);
      cache->inv_std[c] = inv_std;
    }
    for (std::size_t b = 0; b < batch; ++b) {
      const S* src = &input.data[(b * ch + c) * n];
      S* dst = &out.data[(b * ch + c) * n];
      const S shift = static_cast<S>(mean);
      const S scale = static_cast<S>(inv_std);
      if (cache) {
        S* xh = &cache->xhat.data[(b * ch + c) * n];
        for (std::size_t t = 0; t < n; ++t) {
          const S x = (src[t] - shift) * scale;
          xh[t] = x;
          dst[t] = g * x + bta;
        }
      } else {
        for (std::size_t t = 0; t < n; ++t) dst[t] = g * (src[t] - shift) * scale + bta;
      }
    }
  }
  return out;
}

template <typename S>
struct BatchNormGrads {
  Tensor<S> gamma;
  Tensor<S> beta;
  Tensor<S> input;
};

template <typename S>
struct BatchNormParamGrads {
  Tensor<S> gamma;
  Tensor<S> beta;
};

/// Train-mode backward through the batch statistics; overwrites `grad`
/// (the upstream gradient) with the input gradient.
template <typename S>
BatchNormParamGrads<S> batchnorm_backward_inplace(const BatchNormCache<S>& cache,
                                                  const Tensor<S>& gamma,
                                                  Tensor<S>& grad) {
  const std::size_t batch = cache.xhat.dim(0), ch = cache.xhat.dim(1), n = cache.xhat.dim(2);
  if (grad.shape != cache.xhat.shape) throw ShapeError("batchnorm upstream shape mismatch");

  BatchNormParamGrads<S> g;
  g.gamma = Tensor<S>({ch});
  g.beta = Tensor<S>({ch});
  const double m = static_cast<double>(batch * n);

  for (std::size_t c = 0; c < ch; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const S* dy = &grad.data[(b * ch + c) * n];
      const S* xh = &cache.xhat.data[(b * ch + c) * n];
      sum_dy += detail::lane_sum(dy, n);
      sum_dy_xhat += detail::lane_dot_f64(dy, xh, n);
    }
    g.beta.data[c] = static_cast<S>(sum_dy);
    g.gamma.data[c] = static_cast<S>(sum_dy_xhat);

    const double gam = gamma.data[c];
    const double scale = gam * cache.inv_std[c] / m;
    for (std::size_t b = 0; b < batch; ++b) {
      S* dy = &grad.data[(b * ch + c) * n];
      const S* xh = &cache.xhat.data[(b * ch + c) * n];
      for (std::size_t t = 0; t < n; ++t) {
        dy[t] = static_cast<S>(scale * (m * dy[t] - sum_dy - xh[t] * sum_dy_xhat));
      }
    }
  }
  return g;
}

/// Train-mode backward through the batch statistics.
template <typename S>
BatchNormGrads<S> batchnorm_backward(const BatchNormCache<S>& cache,
                                     const Tensor<S>& gamma, const Tensor<S>& upstream) {
  Tensor<S> dx = upstream;
  auto params = batchnorm_backward_inplace(cache, gamma, dx);
  BatchNormGrads<S> g;
  g.gamma = std::move(params.gamma);
  g.beta = std::move(params.beta);
  g.input = std::move(dx);
  return g;
}

// ---------------------------------------------------------------------------
// ReLU

template <typename S>
Tensor<S> relu_forward(const Tensor<S>& input) {
  Tensor<S> out(input.shape);
  for (std::size_t i = 0; i < input.numel(); ++i) {
    out.data[i] = input.data[i] > S(0) ? input.data[i] : S(0);
  }
  return out;
}

/// Zeroes the gradient wherever the forward input was non-positive.
template <typename S>
void relu_backward_inplace(const Tensor<S>& input, Tensor<S>& grad) {
  if (!input.same_shape(grad)) throw ShapeError("relu upstream shape mismatch");
  const S* in = input.data.data();
  S* g = grad.data.data();
  for (std::size_t i = 0; i < input.numel(); ++i) {
    g[i] = in[i] > S(0) ? g[i] : S(0);  // branchless select
  }
}

/// Derivative is 1 for strictly positive inputs, 0 elsewhere.
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& input, const Tensor<S>& upstream) {
  Tensor<S> grad = upstream;
  relu_backward_inplace(input, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Fully connected layer

/// input [B x F], weights [F x U], bias [U] -> [B x U]
template <typename S>
Tensor<S> dense_forward(const Tensor<S>& input, const Tensor<S>& weights,
                        const Tensor<S>& bias) {
  if (input.rank() != 2 || weights.rank() != 2 || bias.rank() != 1) {
    throw ShapeError("dense expects input [B x F], weights [F x U], bias [U]");
  }
  const std::size_t batch = input.dim(0), f = input.dim(1);
  const std::size_t units = weights.dim(1);
  if (weights.dim(0) != f) throw ShapeError("dense weight shape mismatch");
  if (bias.dim(0) != units) throw ShapeError("dense bias shape mismatch");

  Tensor<S> out({batch, units});
  for (std::size_t b = 0; b < batch; ++b) {
    S* dst = &out.data[b * units];
    std::copy(bias.data.begin(), bias.data.end(), dst);
    const S* src = &input.data[b * f];
    for (std::size_t i = 0; i < f; ++i) {
      const S x = src[i];
      const S* w = &weights.data[i * units];
      for (std::size_t u = 0; u < units; ++u) dst[u] += x * w[u];
    }
  }
  return out;
}

template <typename S>
struct DenseGrads {
  Tensor<S> weights;
  Tensor<S> bias;
  Tensor<S> input;
};

template <typename S>
DenseGrads<S> dense_backward(const Tensor<S>& input, const Tensor<S>& weights,
                             const Tensor<S>& upstream) {
  const std::size_t batch = input.dim(0), f = input.dim(1);
  const std::size_t units = weights.dim(1);
  if (upstream.shape != std::vector<std::size_t>{batch, units}) {
    throw ShapeError("dense upstream gradient shape mismatch");
  }

  DenseGrads<S> g;
  g.weights = Tensor<S>({f, units});
  g.bias = Tensor<S>({units});
  g.input = Tensor<S>({batch, f});
  for (std::size_t b = 0; b < batch; ++b) {
    const S* up = &upstream.data[b * units];
    const S* src = &input.data[b * f];
    for (std::size_t u = 0; u < units; ++u) g.bias.data[u] += up[u];
    for (std::size_t i = 0; i < f; ++i) {
      const S* w = &weights.data[i * units];
      S* gw = &g.weights.data[i * units];
      const S x = src[i];
      S acc = 0;
      for (std::size_t u = 0; u < units; ++u) {
        gw[u] += x * up[u];
        acc += w[u] * up[u];
      }
      g.input.data[b * f + i] = acc;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout

template <typename S>
struct DropoutResult {
  Tensor<S> out;
  std::vector<std::uint8_t> mask;  // empty in infer mode
};

/// Train mode zeroes each element with probability `rate` and scales the
/// survivors by 1/(1-rate); infer mode is the identity.
template <typename S>
DropoutResult<S> dropout_forward(const Tensor<S>& input, double rate, RunMode mode,
                                 Rng* rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  DropoutResult<S> r;
  if (mode == RunMode::kInfer || rate == 0.0) {
    r.out = input;
    return r;
  }
  if (!rng) throw ConfigError("dropout in train mode requires a generator");
  r.out = Tensor<S>(input.shape);
  r.mask.resize(input.numel());
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < input.numel(); ++i) {
    const bool keep = rng->uniform() >= rate;
    r.mask[i] = keep ? 1 : 0;
    r.out.data[i] = keep ? input.data[i] * scale : S(0);
  }
  return r;
}

/// Applies the stored mask and survivor scaling to the gradient in place.
template <typename S>
void dropout_backward_inplace(const DropoutResult<S>& fwd, double rate, Tensor<S>& grad) {
  if (fwd.mask.empty()) return;  // identity pass
  if (grad.numel() != fwd.mask.size()) throw ShapeError("dropout upstream size mismatch");
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < grad.numel(); ++i) {
    grad.data[i] = fwd.mask[i] ? grad.data[i] * scale : S(0);
  }
}

template <typename S>
Tensor<S> dropout_backward(const DropoutResult<S>& fwd, double rate,
                           const Tensor<S>& upstream) {
  Tensor<S> grad = upstream;
  dropout_backward_inplace(fwd, rate, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Losses

template <typename S>
struct LossResult {
  double loss = 0.0;
  Tensor<S> grad;  // with respect to the predictions / logits
};

/// Mean squared error over a batch of scalar predictions.
/// loss = (1/B) sum (pred-target)^2, grad = (2/B)(pred-target).
template <typename S>
LossResult<S> mse_loss(const Tensor<S>& pred, std::span<const S> target) {
  const std::size_t batch = pred.dim(0);
  if (pred.numel() != batch) throw ShapeError("mse expects one prediction per row");
  if (target.size() != batch || batch == 0) {
    throw ShapeError("mse prediction/target length mismatch");
  }
  LossResult<S> r;
  r.grad = Tensor<S>(pred.shape);
  double acc = 0.0;
  const double inv = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const double d = static_cast<double>(pred.data[b]) - target[b];
    acc += d * d;
    r.grad.data[b] = static_cast<S>(2.0 * inv * d);
  }
  r.loss = acc * inv;
  return r;
}

/// Softmax cross-entropy over logits [B x K] with integer class targets.
/// Computed with max subtraction; grad = (softmax - onehot)/B.
template <typename S>
LossResult<S> softmax_crossentropy(const Tensor<S>& logits, std::span<const int> targets) {
  if (logits.rank() != 2) throw ShapeError("softmax loss expects [B x K] logits");
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  if (k < 2) throw ShapeError("softmax loss needs at least two classes");
  if (targets.size() != batch || batch == 0) throw ShapeError("softmax target length mismatch");

  LossResult<S> r;
  r.grad = Tensor<S>(logits.shape);
  const double inv = 1.0 / static_cast<double>(batch);
  double acc = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int t = targets[b];
    if (t < 0 || static_cast<std::size_t>(t) >= k) {
      throw InputError("class index " + std::to_string(t) + " outside [0, " +
                       std::to_string(k) + ")");
    }
    const S* row = &logits.data[b * k];
    const S mx = *std::max_element(row, row + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    const double log_denom = std::log(denom);
    acc += -(static_cast<double>(row[static_cast<std::size_t>(t)] - mx) - log_denom);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(row[j] - mx)) / denom;
      r.grad.data[b * k + j] =
          static_cast<S>((p - (j == static_cast<std::size_t>(t) ? 1.0 : 0.0)) * inv);
    }
  }
  r.loss = acc * inv;
  return r;
}

/// Row-wise softmax (for classification inference).
template <typename S>
Tensor<S> softmax(const Tensor<S>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [B x K]");
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  Tensor<S> out(logits.shape);
  for (std::size_t b = 0; b < batch; ++b) {
    const S* row = &logits.data[b * k];
    S* dst = &out.data[b * k];
    const S mx = *std::max_element(row, row + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) {
      dst[j] = static_cast<S>(std::exp(static_cast<double>(row[j] - mx)) / denom);
    }
  }
  return out;
}

}  // namespace rawvoice
