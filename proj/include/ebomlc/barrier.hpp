#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "ebomlc/error.hpp"
#include "ebomlc/objectives.hpp"
#include "ebomlc/param_set.hpp"

namespace ebomlc {

inline constexpr double kDefaultEpsQ = 1e-12;

struct BetaResult {
  double beta = 0.0;
  double phi = 0.0;        // barrier value
  double inner = 0.0;      // upper-gradient / Q-gradient inner product entering the formula
  double alignment = 0.0;  // alpha-block inner product, zero for MLC-D
  double q_sq_norm = 0.0;  // full squared norm of the Q gradient
  bool clipped = false;    // the max(., 0) was active
  bool degenerate = false;
};

namespace detail {
inline void require_finite_scalars(std::initializer_list<double> xs, const char* op) {
  for (double x : xs) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}
inline void require_delta(double delta, const char* op) {
  if (!(delta > 0.0)) throw ConfigError(std::string(op) + ": delta must be positive");
}
}  // namespace detail

/// max((delta |q|^2 - g.q) / |q|^2, 0) for flat vectors; g is the upper
/// gradient with its alpha block already zero-padded.
inline BetaResult beta_mlcd(std::span<const double> grad_f, std::span<const double> grad_q, double delta,
                            double eps_q = kDefaultEpsQ) {
  detail::require_delta(delta, "beta_mlcd");
  if (grad_f.size() != grad_q.size()) throw DimensionError("beta_mlcd: gradient length mismatch");
  BetaResult r;
  for (std::size_t i = 0; i < grad_f.size(); ++i) {
    r.inner += grad_f[i] * grad_q[i];
    r.q_sq_norm += grad_q[i] * grad_q[i];
  }
  detail::require_finite_scalars({r.inner, r.q_sq_norm}, "beta_mlcd");
  r.phi = delta * r.q_sq_norm;
  if (r.q_sq_norm < eps_q) {
    r.degenerate = true;
    return r;
  }
  const double raw = (r.phi - r.inner) / r.q_sq_norm;
  r.clipped = raw <= 0.0;
  r.beta = r.clipped ? 0.0 : raw;
  return r;
}

/// MLC-D coefficient from a w-block upper gradient and a full Q gradient.
inline BetaResult beta_mlcd(const ParamSet& grad_w_f, const ObjectiveEval& q, double delta,
                            double eps_q = kDefaultEpsQ) {
  detail::require_delta(delta, "beta_mlcd");
  BetaResult r;
  r.inner = dot(grad_w_f, q.grad_w);
  r.q_sq_norm = q.grad_squared_norm();
  detail::require_finite_scalars({r.inner, r.q_sq_norm}, "beta_mlcd");
  r.phi = delta * r.q_sq_norm;
  if (r.q_sq_norm < eps_q) {
    r.degenerate = true;
    return r;
  }
  const double raw = (r.phi - r.inner) / r.q_sq_norm;
  r.clipped = raw <= 0.0;
  r.beta = r.clipped ? 0.0 : raw;
  return r;
}

/// max(delta - grad_w Fbar . grad_w Q / |grad Q|^2, 0). The numerator is the
/// w-block product; the denominator is the full (w, alpha) squared norm
/// unless `w_only_denominator` is set.
inline BetaResult beta_ebomlc(const ObjectiveEval& fbar, const ObjectiveEval& q, double delta,
                              double eps_q = kDefaultEpsQ, bool w_only_denominator = false) {
  detail::require_delta(delta, "beta_ebomlc");
  BetaResult r;
  r.inner = dot(fbar.grad_w, q.grad_w);
  r.alignment = dot(fbar.grad_alpha, q.grad_alpha);
  r.q_sq_norm = q.grad_squared_norm();
  const double denom = w_only_denominator ? squared_norm(q.grad_w) : r.q_sq_norm;
  detail::require_finite_scalars({r.inner, r.alignment, r.q_sq_norm}, "beta_ebomlc");
  r.phi = delta * r.q_sq_norm + r.alignment;
  if (denom < eps_q) {
    r.degenerate = true;
    return r;
  }
  const double raw = delta - r.inner / denom;
  r.clipped = raw <= 0.0;
  r.beta = r.clipped ? 0.0 : raw;
  return r;
}

/// direction = grad Fbar + xi * beta * grad Q, returned as (w block, alpha block).
inline std::pair<ParamSet, ParamSet> compose_direction(const ObjectiveEval& fbar, const ObjectiveEval& q, double beta,
                                                       double xi) {
  if (!(xi > 0.0 && xi <= 1.0)) throw ConfigError("compose_direction: xi must lie in (0, 1]");
  const double s = xi * beta;
  return {axpy(fbar.grad_w, s, q.grad_w), axpy(fbar.grad_alpha, s, q.grad_alpha)};
}

/// Per-step record of the barrier computation.
struct BarrierStep {
  std::size_t t = 0;
  double q_value = 0.0;
  double q_sq_norm = 0.0;
  double phi = 0.0;
  double alignment = 0.0;
  double beta = 0.0;
  double grad_w_f_norm = 0.0;
  double grad_alpha_f_norm = 0.0;
  double dir_w_norm = 0.0;
  double dir_alpha_norm = 0.0;
  double f_value = 0.0;
  double g_value = 0.0;
  double grad_w_g_start_norm = 0.0;
  double grad_w_g_end_norm = 0.0;
  bool clipped = false;
  bool degenerate = false;
};

/// Numeric abort that carries the offending step.
class StepAbort : public NumericError {
 public:
  StepAbort(const std::string& what, BarrierStep step) : NumericError(what), step_(step) {}
  const BarrierStep& step() const { return step_; }

 private:
  BarrierStep step_;
};

}  // namespace ebomlc
