#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "auxbo/numerics/autodiff.hpp"

namespace auxbo {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay and bias-corrected moments.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  AdamWConfig& config() { return cfg_; }
  std::uint64_t steps() const { return t_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

  /// One update of every parameter in `store`. Parameters absent from `grads`
  /// are treated as having zero gradient (decay still applies).
  void step(ParameterStore& store, const GradientMap& grads) {
    if (m_.size() != store.size()) init(store);
    for (const auto& [id, g] : grads) {
      require(id < store.size(), "AdamW: gradient for unknown parameter");
      require(g.shape == store[id].value.shape,
              "AdamW: gradient shape " + shape_str(g.shape) + " != parameter shape " + shape_str(store[id].value.shape));
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (ParamId id = 0; id < store.size(); ++id) {
      auto& theta = store[id].value.data;
      auto it = grads.find(id);
      const std::vector<double>* g = it == grads.end() ? nullptr : &it->second.data;
      auto& m = m_[id].data;
      auto& v = v_[id].data;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = g ? (*g)[i] : 0.0;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        theta[i] -= cfg_.learning_rate * cfg_.weight_decay * theta[i];
        theta[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

 private:
  void init(const ParameterStore& store) {
    m_.clear();
    v_.clear();
    for (const auto& p : store) {
      m_.emplace_back(p.value.shape);
      v_.emplace_back(p.value.shape);
    }
  }

  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace auxbo
