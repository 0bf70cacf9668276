#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "crossfuse/error.hpp"
#include "crossfuse/types.hpp"

namespace crossfuse {

enum class OptimizerKind { Sgd, Adam };

inline const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

/// Constant-rate first-order optimizer over a fixed parameter list.
/// Adam keeps one pair of moment vectors per tensor, created on first step.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, Real lr, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8)
      : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  }

  void step(const ParamList& params) {
    if (kind_ == OptimizerKind::Sgd) {
      for (const auto& p : params)
        for (std::size_t k = 0; k < p.value.size(); ++k) p.value[k] -= lr_ * p.grad[k];
      ++steps_;
      return;
    }
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.push_back(VectorXr::Zero(static_cast<Index>(p.value.size())));
        second_.push_back(VectorXr::Zero(static_cast<Index>(p.value.size())));
      }
    }
    if (first_.size() != params.size())
      throw DimensionError("optimizer state covers a different parameter list");
    ++steps_;
    const Real c1 = 1 - std::pow(beta1_, static_cast<Real>(steps_));
    const Real c2 = 1 - std::pow(beta2_, static_cast<Real>(steps_));
    for (std::size_t t = 0; t < params.size(); ++t) {
      const auto& p = params[t];
      auto& m = first_[t];
      auto& v = second_[t];
      if (static_cast<std::size_t>(m.size()) != p.value.size())
        throw DimensionError("optimizer state for '" + p.name + "' has the wrong size");
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const auto i = static_cast<Index>(k);
        const Real g = p.grad[k];
        m[i] = beta1_ * m[i] + (1 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1 - beta2_) * g * g;
        p.value[k] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

  OptimizerKind kind() const { return kind_; }
  Real learning_rate() const { return lr_; }
  std::int64_t steps() const { return steps_; }

  // State access for checkpoints.
  std::vector<VectorXr>& first_moments() { return first_; }
  std::vector<VectorXr>& second_moments() { return second_; }
  const std::vector<VectorXr>& first_moments() const { return first_; }
  const std::vector<VectorXr>& second_moments() const { return second_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  OptimizerKind kind_ = OptimizerKind::Adam;
  Real lr_ = 1e-3;
  Real beta1_ = 0.9;
  Real beta2_ = 0.999;
  Real eps_ = 1e-8;
  std::int64_t steps_ = 0;
  std::vector<VectorXr> first_;
  std::vector<VectorXr> second_;
};

inline void zero_grads(const ParamList& params) {
  for (const auto& p : params)
    for (auto& g : p.grad) g = 0;
}

}  // namespace crossfuse
