#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "ebomlc/error.hpp"
#include "ebomlc/param_set.hpp"

namespace ebomlc {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Applies one update of `params` along the descent direction.
  virtual void step(ParamSet& params, const ParamSet& direction, double lr) = 0;
};

/// buffer <- mu * buffer + (direction + wd * params); params <- params - lr * buffer.
class SgdMomentum : public Optimizer {
 public:
  explicit SgdMomentum(double momentum = 0.9, double weight_decay = 5e-4)
      : momentum_(momentum), weight_decay_(weight_decay) {
    if (!(momentum_ >= 0.0 && momentum_ < 1.0)) throw ConfigError("SgdMomentum: momentum must lie in [0, 1)");
    if (!(weight_decay_ >= 0.0)) throw ConfigError("SgdMomentum: weight decay must be non-negative");
  }

  void step(ParamSet& params, const ParamSet& direction, double lr) override {
    if (!(lr > 0.0)) throw ConfigError("sgd_momentum_update: learning rate must be positive");
    if (!params.same_structure(direction)) throw DimensionError("sgd_momentum_update: direction structure mismatch");
    if (buffer_.empty()) buffer_ = params.zeros_like();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params.entry(i).value.data();
      auto b = buffer_.entry(i).value.data();
      const auto d = direction.entry(i).value.data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        b[j] = momentum_ * b[j] + (d[j] + weight_decay_ * p[j]);
        p[j] -= lr * b[j];
      }
    }
  }

  const ParamSet& buffer() const { return buffer_; }

 private:
  double momentum_;
  double weight_decay_;
  ParamSet buffer_;
};

/// Bias-corrected Adam.
class Adam : public Optimizer {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(beta1_ >= 0.0 && beta1_ < 1.0) || !(beta2_ >= 0.0 && beta2_ < 1.0)) {
      throw ConfigError("Adam: betas must lie in [0, 1)");
    }
    if (!(eps_ > 0.0)) throw ConfigError("Adam: eps must be positive");
  }

  void step(ParamSet& params, const ParamSet& direction, double lr) override {
    if (!(lr > 0.0)) throw ConfigError("adam_update: learning rate must be positive");
    if (!params.same_structure(direction)) throw DimensionError("adam_update: direction structure mismatch");
    if (m_.empty()) {
      m_ = params.zeros_like();
      v_ = params.zeros_like();
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params.entry(i).value.data();
      auto m = m_.entry(i).value.data();
      auto v = v_.entry(i).value.data();
      const auto d = direction.entry(i).value.data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * d[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * d[j] * d[j];
        p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
      }
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  ParamSet m_, v_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Learning-rate schedules
// ---------------------------------------------------------------------------

enum class ScheduleKind : std::uint8_t { kStepDecay, kFixedHorizon, kDecaying };

struct LRSchedule {
  ScheduleKind kind = ScheduleKind::kStepDecay;
  // step-decay, indexed by epoch
  double base_w = 0.1;
  double base_alpha = 3e-4;
  double factor = 0.1;
  std::vector<std::size_t> milestones{80, 100};
  // theorem1: eta_alpha = c / T, eta_w = C / sqrt(T); assumption3: eta_w = C / sqrt(t), eta_alpha = eta_w / (t + 1)
  double c = 1.0;
  double C = 0.1;
  std::size_t horizon = 0;

  static LRSchedule step_decay(double base_w, double base_alpha, double factor, std::vector<std::size_t> milestones) {
    LRSchedule s;
    s.base_w = base_w;
    s.base_alpha = base_alpha;
    s.factor = factor;
    s.milestones = std::move(milestones);
    s.validate();
    return s;
  }
  static LRSchedule theorem1(double c, double C, std::size_t horizon) {
    LRSchedule s;
    s.kind = ScheduleKind::kFixedHorizon;
    s.c = c;
    s.C = C;
    s.horizon = horizon;
    s.validate();
    return s;
  }
  static LRSchedule assumption3(double C, std::size_t horizon) {
    LRSchedule s;
    s.kind = ScheduleKind::kDecaying;
    s.C = C;
    s.horizon = horizon;
    s.validate();
    return s;
  }

  void validate() const {
    if (kind == ScheduleKind::kStepDecay) {
      for (std::size_t i = 1; i < milestones.size(); ++i) {
        if (milestones[i] <= milestones[i - 1]) throw ConfigError("LRSchedule: milestones must be strictly increasing");
      }
      if (!(base_w > 0.0 && base_alpha > 0.0 && factor > 0.0)) throw ConfigError("LRSchedule: rates must be positive");
    } else {
      if (horizon == 0) throw ConfigError("LRSchedule: horizon must be positive");
      if (!(C > 0.0) || (kind == ScheduleKind::kFixedHorizon && !(c > 0.0))) {
        throw ConfigError("LRSchedule: constants must be positive");
      }
    }
  }
};

struct EtaPair {
  double w = 0.0;
  double alpha = 0.0;
  std::vector<std::string> warnings;
};

/// Rates at epoch (step-decay) or step t >= 1 (theorem1, assumption3).
/// `lipschitz` enables the eta_w < (1 - xi) / L check; pass NaN to skip it.
inline EtaPair schedule_eta(const LRSchedule& s, std::size_t t, double xi = 0.5,
                            double lipschitz = std::numeric_limits<double>::quiet_NaN()) {
  EtaPair out;
  switch (s.kind) {
    case ScheduleKind::kStepDecay: {
      out.w = s.base_w;
      for (std::size_t m : s.milestones) {
        if (t >= m) out.w *= s.factor;
      }
      out.alpha = s.base_alpha;
      break;
    }
    case ScheduleKind::kFixedHorizon: {
      if (t < 1 || t > s.horizon) throw UsageError("schedule_eta: step outside horizon");
      const double T = static_cast<double>(s.horizon);
      out.w = s.C / std::sqrt(T);
      out.alpha = s.c / T;
      if (!(out.alpha < 1.0)) out.warnings.push_back("eta_alpha = c/T must be < 1");
      break;
    }
    case ScheduleKind::kDecaying: {
      if (t < 1 || t > s.horizon) throw UsageError("schedule_eta: step outside horizon");
      const double td = static_cast<double>(t);
      out.w = s.C / std::sqrt(td);
      out.alpha = out.w / (td + 1.0);
      break;
    }
  }
  if (!(out.alpha < out.w)) out.warnings.push_back("eta_alpha must be < eta_w");
  if (!(out.w < 1.0)) out.warnings.push_back("eta_w must be < 1");
  if (std::isfinite(lipschitz) && !(out.w < (1.0 - xi) / lipschitz)) {
    out.warnings.push_back("eta_w must be < (1 - xi) / L");
  }
  return out;
}

inline std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, double momentum = 0.0,
                                                 double weight_decay = 0.0) {
  if (kind == "adam") return std::make_unique<Adam>();
  if (kind == "sgd") return std::make_unique<SgdMomentum>(momentum, weight_decay);
  throw ConfigError("unknown optimizer '" + kind + "'");
}

}  // namespace ebomlc
