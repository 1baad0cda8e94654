#pragma once

// Independent brute-force reference implementations used only by the tests.
// These deliberately share no code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "rawvoice/tensor.hpp"

namespace oracle {

/// Triple-loop valid cross-correlation, double precision.
inline rawvoice::Tensor<double> conv1d(const rawvoice::Tensor<double>& input,
                                       const rawvoice::Tensor<double>& weights,
                                       const rawvoice::Tensor<double>& bias) {
  const std::size_t B = input.dim(0), C = input.dim(1), N = input.dim(2);
  const std::size_t O = weights.dim(0), K = weights.dim(2);
  rawvoice::Tensor<double> out({B, O, N - K + 1});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t t = 0; t + K <= N; ++t) {
        double acc = bias.at(o);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t j = 0; j < K; ++j) acc += input.at(b, c, t + j) * weights.at(o, c, j);
        out.at(b, o, t) = acc;
      }
  return out;
}

/// Naive matrix multiply with bias broadcast.
inline rawvoice::Tensor<double> dense(const rawvoice::Tensor<double>& input,
                                      const rawvoice::Tensor<double>& weights,
                                      const rawvoice::Tensor<double>& bias) {
  const std::size_t B = input.dim(0), F = input.dim(1), U = weights.dim(1);
  rawvoice::Tensor<double> out({B, U});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t u = 0; u < U; ++u) {
      double acc = bias.at(u);
      for (std::size_t f = 0; f < F; ++f) acc += input.at(b, f) * weights.at(f, u);
      out.at(b, u) = acc;
    }
  return out;
}

/// Definitional softmax cross-entropy: mean over the batch of
/// -log(exp(z_t) / sum_j exp(z_j)), evaluated directly.
inline double softmax_crossentropy(const rawvoice::Tensor<double>& logits,
                                   const std::vector<int>& targets) {
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    double denom = 0.0;
    for (std::size_t j = 0; j < K; ++j) denom += std::exp(logits.at(b, j));
    const double p = std::exp(logits.at(b, static_cast<std::size_t>(targets[b]))) / denom;
    total += -std::log(p);
  }
  return total / static_cast<double>(B);
}

/// Counting-based fractional ranks: rank = (#smaller + 1) + (#equal - 1)/2.
inline std::vector<double> fractional_ranks(const std::vector<double>& v) {
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t smaller = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) ++smaller;
      if (v[j] == v[i]) ++equal;
    }
    ranks[i] = static_cast<double>(smaller) + 1.0 +
               (static_cast<double>(equal) - 1.0) / 2.0;
  }
  return ranks;
}

/// Textbook Pearson on the counting-based ranks.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  const auto n = static_cast<double>(a.size());
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += ra[i];
    sb += rb[i];
    sab += ra[i] * rb[i];
    saa += ra[i] * ra[i];
    sbb += rb[i] * rb[i];
  }
  return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

/// Direct windowed-sinc decimator: Hamming sinc taps, full convolution per
/// output sample, double precision throughout.
inline std::vector<double> sinc_resample(const std::vector<float>& x, int factor,
                                         int taps, double cutoff_norm) {
  std::vector<double> h(static_cast<std::size_t>(taps));
  const double mid = (taps - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < taps; ++i) {
    const double m = i - mid;
    const double arg = 2.0 * std::numbers::pi * cutoff_norm * m;
    const double sinc = m == 0.0 ? 2.0 * cutoff_norm : std::sin(arg) / (std::numbers::pi * m);
    const double win = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (taps - 1));
    h[static_cast<std::size_t>(i)] = sinc * win;
    sum += h[static_cast<std::size_t>(i)];
  }
  for (auto& v : h) v /= sum;

  std::vector<double> out(x.size() / static_cast<std::size_t>(factor));
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto delay = static_cast<std::ptrdiff_t>((taps - 1) / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < taps; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) * factor + j - delay;
      if (src >= 0 && src < n) acc += h[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(src)];
    }
    out[i] = acc;
  }
  return out;
}

/// Amplitude of the strongest spectral component, estimated as
/// 2*max|DFT|/N over a coarse-to-fine frequency sweep.
inline double spectrum_peak_amplitude(const std::vector<float>& x, double sample_rate,
                                      double f_lo, double f_hi, double step_hz) {
  double best = 0.0;
  const double w0 = 2.0 * std::numbers::pi / sample_rate;
  for (double f = f_lo; f <= f_hi; f += step_hz) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
      re += x[t] * std::cos(w0 * f * static_cast<double>(t));
      im -= x[t] * std::sin(w0 * f * static_cast<double>(t));
    }
    best = std::max(best, 2.0 * std::hypot(re, im) / static_cast<double>(x.size()));
  }
  return best;
}

/// Frequency (Hz) of the strongest spectral component over a grid.
inline double spectrum_peak_freq(const std::vector<float>& x, double sample_rate,
                                 double f_lo, double f_hi, double step_hz) {
  double best = -1.0, best_f = f_lo;
  const double w0 = 2.0 * std::numbers::pi / sample_rate;
  for (double f = f_lo; f <= f_hi; f += step_hz) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
      re += x[t] * std::cos(w0 * f * static_cast<double>(t));
      im -= x[t] * std::sin(w0 * f * static_cast<double>(t));
    }
    const double mag = std::hypot(re, im);
    if (mag > best) {
      best = mag;
      best_f = f;
    }
  }
  return best_f;
}

/// Central finite differences against analytic gradients. `eval` recomputes
/// the scalar loss from the current contents of `params`; `analytic` is
/// aligned with `params`. Returns the worst per-tensor relative error
/// ||g_fd - g_an|| / max(||g_fd||, ||g_an||, floor). The floor must sit above
/// the finite-difference resolution eps*|loss|/(2h) (~1e-11 here), where both
/// sides of a structurally zero gradient read as roundoff noise.
inline double gradcheck(const std::vector<rawvoice::Tensor<double>*>& params,
                        const std::vector<rawvoice::Tensor<double>>& analytic,
                        const std::function<double()>& eval, double h = 1e-3) {
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    double diff2 = 0.0, fd2 = 0.0, an2 = 0.0;
    for (std::size_t i = 0; i < params[p]->numel(); ++i) {
      const double saved = params[p]->data[i];
      params[p]->data[i] = saved + h;
      const double up = eval();
      params[p]->data[i] = saved - h;
      const double down = eval();
      params[p]->data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[p].data[i];
      diff2 += (fd - an) * (fd - an);
      fd2 += fd * fd;
      an2 += an * an;
    }
    const double denom = std::max({std::sqrt(fd2), std::sqrt(an2), 1e-6});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

}  // namespace oracle
