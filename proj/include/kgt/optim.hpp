/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/optim.hpp
 * @brief AdamW with per-epoch exponential learning-rate decay.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "kgt/error.hpp"
#include "kgt/tensor.hpp"

namespace kgt::nn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  /// lr_t = lr * lr_decay^epoch
  double lr_decay = 0.997;
};

template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void init(std::span<Tensor<T>* const> params) {
    first_.clear();
    second_.clear();
    for (const auto* p : params) {
      first_.emplace_back(p->size(), T(0));
      second_.emplace_back(p->size(), T(0));
    }
    steps_ = 0;
    initialized_ = true;
  }

  bool initialized() const { return initialized_; }
  std::size_t steps() const { return steps_; }
  const AdamWConfig& config() const { return config_; }

  double learning_rate(std::size_t epoch) const {
    return config_.lr * std::pow(config_.lr_decay, static_cast<double>(epoch));
  }

  /// Bias-corrected Adam step with decoupled weight decay.
  void step(std::span<Tensor<T>* const> params, const std::vector<std::vector<T>>& grads, std::size_t epoch) {
    if (!initialized_) throw Error("AdamW::step called before init()");
    if (params.size() != first_.size() || grads.size() != params.size())
      throw ShapeError("AdamW: parameter list does not match optimizer state");
    ++steps_;
    const double lr = learning_rate(epoch);
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k]->values;
      const auto& g = grads[k];
      if (g.size() != p.size()) throw ShapeError("AdamW: gradient shape mismatch");
      auto& m = first_[k];
      auto& v = second_[k];
      const T decay = static_cast<T>(1.0 - lr * config_.weight_decay);
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        const double mhat = static_cast<double>(m[i]) / c1;
        const double vhat = static_cast<double>(v[i]) / c2;
        p[i] = p[i] * decay - static_cast<T>(lr * mhat / (std::sqrt(vhat) + config_.eps));
      }
    }
  }

 private:
  AdamWConfig config_;
  std::vector<std::vector<T>> first_, second_;
  std::size_t steps_ = 0;
  bool initialized_ = false;
};

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_global_norm(std::vector<std::vector<T>>& grads, double max_norm) {
  double sq = 0;
  for (const auto& g : grads)
    for (T v : g) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& g : grads)
      for (T& v : g) v *= s;
  }
  return norm;
}

}  // namespace kgt::nn
