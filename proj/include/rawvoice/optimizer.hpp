#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rawvoice/error.hpp"
#include "rawvoice/tensor.hpp"

namespace rawvoice {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment tensors mirror the parameter shapes;
/// the timestep is incremented before every update.
template <typename S>
class AdamState {
 public:
  AdamState() = default;

  AdamState(const std::vector<Tensor<S>*>& params, AdamConfig cfg) : cfg_(cfg) {
    if (cfg.lr < 0) throw ConfigError("learning rate must be >= 0");
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor<S>* p : params) {
      m_.push_back(Tensor<S>(p->shape));
      v_.push_back(Tensor<S>(p->shape));
    }
  }

  const AdamConfig& config() const { return cfg_; }
  long timestep() const { return t_; }

  /// Applies one update. Throws NumericError on any non-finite gradient
  /// before touching parameters or moments.
  void step(const std::vector<Tensor<S>*>& params, const std::vector<Tensor<S>>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw ShapeError("adam parameter/gradient count mismatch");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!params[i]->same_shape(grads[i])) {
        throw ShapeError("adam gradient shape mismatch at parameter " + std::to_string(i));
      }
      for (const S g : grads[i].data) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw NumericError("non-finite gradient in parameter " + std::to_string(i));
        }
      }
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      S* p = params[i]->data.data();
      S* m = m_[i].data.data();
      S* v = v_[i].data.data();
      const S* g = grads[i].data.data();
      const std::size_t n = params[i]->numel();
      for (std::size_t j = 0; j < n; ++j) {
        const double gj = g[j];
        const double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        const double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        m[j] = static_cast<S>(mj);
        v[j] = static_cast<S>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        p[j] = static_cast<S>(p[j] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Tensor<S>> m_, v_;
  long t_ = 0;
};

}  // namespace rawvoice
