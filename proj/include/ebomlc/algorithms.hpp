#pragma once

#include <span>
#include <string>
#include <utility>

#include "ebomlc/barrier.hpp"
#include "ebomlc/objectives.hpp"
#include "ebomlc/optim.hpp"

namespace ebomlc {

struct BarrierConfig {
  double xi = 0.5;
  double delta = 0.25;
  double eps_q = kDefaultEpsQ;
  std::size_t k = 1;
  bool w_only_denominator = false;

  void validate() const {
    if (!(xi > 0.0 && xi <= 1.0)) throw ConfigError("xi must lie in (0, 1]");
    if (!(delta > 0.0)) throw ConfigError("delta must be positive");
    if (!(eps_q >= 0.0)) throw ConfigError("eps_q must be non-negative");
    if (k < 1) throw ConfigError("k must be >= 1");
  }
};

struct StepRates {
  double eta_w = 0.1;
  double eta_alpha = 3e-4;
};

namespace detail {
inline void fill_common(BarrierStep& s, std::size_t t, const ObjectiveEval& f, const QEval& q, const BetaResult& b,
                        const ParamSet& dir_w, const ParamSet& dir_alpha) {
  s.t = t;
  s.q_value = q.q.value;
  s.q_sq_norm = b.q_sq_norm;
  s.phi = b.phi;
  s.alignment = b.alignment;
  s.beta = b.beta;
  s.grad_w_f_norm = norm(f.grad_w);
  s.grad_alpha_f_norm = norm(f.grad_alpha);
  s.dir_w_norm = norm(dir_w);
  s.dir_alpha_norm = norm(dir_alpha);
  s.f_value = f.value;
  s.g_value = q.g_start;
  s.grad_w_g_start_norm = norm(q.grad_w_start);
  s.grad_w_g_end_norm = norm(q.grad_w_end);
  s.clipped = b.clipped;
  s.degenerate = b.degenerate;
}

inline void require_finite_direction(const BarrierStep& s, const ParamSet& dw, const ParamSet& da, const char* op) {
  if (!dw.all_finite() || !da.all_finite() || !std::isfinite(s.beta)) {
    throw StepAbort(std::string(op) + ": non-finite update direction at step " + std::to_string(s.t), s);
  }
}
template <class Fn>
auto guarded(std::size_t t, const char* op, Fn&& fn) {
  try {
    return fn();
  } catch (const StepAbort&) {
    throw;
  } catch (const std::exception& e) {
    if (!dynamic_cast<const DomainError*>(&e) && !dynamic_cast<const NumericError*>(&e)) throw;
    BarrierStep s;
    s.t = t;
    throw StepAbort(std::string(op) + ": " + e.what() + " at step " + std::to_string(t), s);
  }
}
}  // namespace detail

/// One EBOMLC iteration. The surrogate comes from `noisy[0..k)`; with k = 1
/// this is the one-step surrogate on noisy[0]. The upper objective is the
/// provider's mixture loss on `clean`.
inline BarrierStep ebomlc_step(const ObjectiveProvider& p, ParamSet& w, ParamSet& alpha, Optimizer& opt_w,
                               Optimizer& opt_alpha, const Batch& clean, std::span<const Batch> noisy,
                               const BarrierConfig& cfg, const StepRates& rates, std::size_t t) {
  if (noisy.empty()) throw UsageError("ebomlc_step: no noisy batch");
  const auto [q, fbar] = detail::guarded(t, "ebomlc_step", [&] {
    QEval qe = cfg.k == 1 ? one_step_Q(p, w, alpha, noisy[0], rates.eta_w)
                          : kstep_Q(p, w, alpha, noisy, cfg.k, rates.eta_w);
    return std::pair{std::move(qe), p.upper(w, alpha, clean)};
  });
  const BetaResult b = beta_ebomlc(fbar, q.q, cfg.delta, cfg.eps_q, cfg.w_only_denominator);
  auto [dir_w, dir_alpha] = compose_direction(fbar, q.q, b.beta, cfg.xi);
  BarrierStep s;
  detail::fill_common(s, t, fbar, q, b, dir_w, dir_alpha);
  detail::require_finite_direction(s, dir_w, dir_alpha, "ebomlc_step");
  opt_w.step(w, dir_w, rates.eta_w);
  opt_alpha.step(alpha, dir_alpha, rates.eta_alpha);
  return s;
}

/// One MLC-D outer iteration: k inner steps for Q, then w moves along
/// grad_w F + beta grad_w Q from its pre-inner-loop value and alpha along
/// beta grad_alpha Q.
inline BarrierStep mlcd_outer_step(const ObjectiveProvider& p, ParamSet& w, ParamSet& alpha, Optimizer& opt_w,
                                   Optimizer& opt_alpha, const Batch& clean, std::span<const Batch> noisy,
                                   const BarrierConfig& cfg, const StepRates& rates, std::size_t t) {
  const auto [q, f] = detail::guarded(t, "mlcd_outer_step", [&] {
    QEval qe = kstep_Q(p, w, alpha, noisy, cfg.k, rates.eta_w);
    return std::pair{std::move(qe), p.upper(w, alpha, clean)};
  });
  const BetaResult b = beta_mlcd(f.grad_w, q.q, cfg.delta, cfg.eps_q);
  const ParamSet dir_w = axpy(f.grad_w, b.beta, q.q.grad_w);
  const ParamSet dir_alpha = scaled(q.q.grad_alpha, b.beta);
  BarrierStep s;
  detail::fill_common(s, t, f, q, b, dir_w, dir_alpha);
  detail::require_finite_direction(s, dir_w, dir_alpha, "mlcd_outer_step");
  opt_w.step(w, dir_w, rates.eta_w);
  opt_alpha.step(alpha, dir_alpha, rates.eta_alpha);
  return s;
}

}  // namespace ebomlc
