#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ebomlc/algorithms.hpp"
#include "ebomlc/error.hpp"
#include "ebomlc/objectives.hpp"
#include "ebomlc/optim.hpp"
#include "ebomlc/rng.hpp"

namespace ebomlc {

/// Upper  Fbar(w, alpha) = 1/2 |w - a|^2 + gamma/2 |alpha - b|^2
/// Lower  G(w, alpha)    = 1/2 |w - M alpha - c|^2, minimized at w = M alpha + c.
struct QuadraticBilevel {
  Tensor a, b, c;  // (d_w), (d_alpha), (d_w)
  Tensor M;        // (d_w, d_alpha)
  double gamma = 0.0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;

  std::size_t dim_w() const { return a.size(); }
  std::size_t dim_alpha() const { return b.size(); }

  /// Gradient Lipschitz bound shared by Fbar and G.
  double lipschitz() const { return std::max({1.0, gamma, 1.0 + sigma_max * sigma_max}); }

  Tensor residual(const Tensor& w, const Tensor& alpha) const {
    Tensor r = w;
    for (std::size_t i = 0; i < dim_w(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim_alpha(); ++j) s += M.at(i, j) * alpha[j];
      r[i] -= s + c[i];
    }
    return r;
  }

  Tensor mt_times(const Tensor& r) const {
    Tensor out(Shape{dim_alpha()});
    for (std::size_t i = 0; i < dim_w(); ++i) {
      for (std::size_t j = 0; j < dim_alpha(); ++j) out[j] += M.at(i, j) * r[i];
    }
    return out;
  }

  ParamSet make_w(Tensor w) const {
    ParamSet p;
    p.add("w", std::move(w));
    return p;
  }
  ParamSet make_alpha(Tensor alpha) const {
    ParamSet p;
    p.add("alpha", std::move(alpha));
    return p;
  }

  /// Closed-form one-step surrogate: value eta (1 - eta/2) |r|^2,
  /// gradients (eta r, -eta M^T r).
  ObjectiveEval closed_form_q(const Tensor& w, const Tensor& alpha, double eta) const {
    const Tensor r = residual(w, alpha);
    double rr = 0.0;
    for (double v : r.data()) rr += v * v;
    Tensor gw = r, ga = mt_times(r);
    for (double& v : gw.data()) v *= eta;
    for (double& v : ga.data()) v *= -eta;
    return {eta * (1.0 - eta / 2.0) * rr, make_w(std::move(gw)), make_alpha(std::move(ga))};
  }
};

namespace detail {
// Columns of a seeded Gaussian matrix, orthonormalized by modified Gram-Schmidt.
inline std::vector<std::vector<double>> orthonormal_columns(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> q;
  while (q.size() < cols) {
    std::vector<double> v(rows);
    for (double& x : v) x = normal(rng);
    for (const auto& u : q) {
      double d = 0.0;
      for (std::size_t i = 0; i < rows; ++i) d += u[i] * v[i];
      for (std::size_t i = 0; i < rows; ++i) v[i] -= d * u[i];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-8) continue;
    for (double& x : v) x /= n;
    q.push_back(std::move(v));
  }
  return q;
}
}  // namespace detail

/// Seeded instance with M = U diag(s) V^T, singular values log-uniform in
/// [0.1, 1] so that cond(M^T M) <= 100. Entries of a, b, c are N(0, 1/d).
inline QuadraticBilevel make_quadratic(std::uint64_t seed, std::size_t d_w, std::size_t d_alpha, double gamma) {
  if (d_w < 1 || d_alpha < 1) throw ConfigError("make_quadratic: dimensions must be >= 1");
  if (d_alpha > d_w) throw ConfigError("make_quadratic: d_alpha must not exceed d_w for a full-rank M");
  if (!(gamma >= 0.0)) throw ConfigError("make_quadratic: gamma must be non-negative");
  Rng rng(derive_seed(seed, {kStreamToy}));
  const auto U = detail::orthonormal_columns(d_w, d_alpha, rng);
  const auto V = detail::orthonormal_columns(d_alpha, d_alpha, rng);
  std::vector<double> s(d_alpha);
  for (std::size_t k = 0; k < d_alpha; ++k) s[k] = std::pow(10.0, -uniform01(rng));
  s[0] = 1.0;
  if (d_alpha > 1) s[d_alpha - 1] = 0.1;

  QuadraticBilevel q;
  q.gamma = gamma;
  q.M = Tensor(Shape{d_w, d_alpha});
  for (std::size_t i = 0; i < d_w; ++i) {
    for (std::size_t j = 0; j < d_alpha; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < d_alpha; ++k) v += U[k][i] * s[k] * V[k][j];
      q.M.at(i, j) = v;
    }
  }
  q.sigma_max = *std::max_element(s.begin(), s.end());
  q.sigma_min = *std::min_element(s.begin(), s.end());
  std::normal_distribution<double> na(0.0, 1.0 / std::sqrt(static_cast<double>(d_w)));
  std::normal_distribution<double> nb(0.0, 1.0 / std::sqrt(static_cast<double>(d_alpha)));
  q.a = Tensor(Shape{d_w});
  q.c = Tensor(Shape{d_w});
  q.b = Tensor(Shape{d_alpha});
  for (double& v : q.a.data()) v = na(rng);
  for (double& v : q.b.data()) v = nb(rng);
  for (double& v : q.c.data()) v = na(rng);
  return q;
}

/// Provider over the closed-form quadratic; batches are ignored.
class QuadraticObjectives : public ObjectiveProvider {
 public:
  explicit QuadraticObjectives(const QuadraticBilevel& q) : q_(q) {}

  ObjectiveEval upper(const ParamSet& w, const ParamSet& alpha, const Batch&) const override {
    const Tensor& wv = w.at("w");
    const Tensor& av = alpha.at("alpha");
    Tensor gw = wv, ga = av;
    double v = 0.0;
    for (std::size_t i = 0; i < gw.size(); ++i) {
      gw[i] -= q_.a[i];
      v += 0.5 * gw[i] * gw[i];
    }
    for (std::size_t j = 0; j < ga.size(); ++j) {
      const double d = ga[j] - q_.b[j];
      v += 0.5 * q_.gamma * d * d;
      ga[j] = q_.gamma * d;
    }
    return {v, q_.make_w(std::move(gw)), q_.make_alpha(std::move(ga))};
  }

  ObjectiveEval lower(const ParamSet& w, const ParamSet& alpha, const Batch&) const override {
    Tensor r = q_.residual(w.at("w"), alpha.at("alpha"));
    double v = 0.0;
    for (double x : r.data()) v += 0.5 * x * x;
    Tensor ga = q_.mt_times(r);
    for (double& x : ga.data()) x = -x;
    return {v, q_.make_w(std::move(r)), q_.make_alpha(std::move(ga))};
  }

 private:
  const QuadraticBilevel& q_;
};

// ---------------------------------------------------------------------------
// Iterate box and gradient bound
// ---------------------------------------------------------------------------

struct IterateBox {
  std::vector<double> w_lo, w_hi, a_lo, a_hi;

  void include(const Tensor& w, const Tensor& alpha) {
    if (w_lo.empty()) {
      w_lo = w_hi = w.values();
      a_lo = a_hi = alpha.values();
      return;
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      w_lo[i] = std::min(w_lo[i], w[i]);
      w_hi[i] = std::max(w_hi[i], w[i]);
    }
    for (std::size_t j = 0; j < alpha.size(); ++j) {
      a_lo[j] = std::min(a_lo[j], alpha[j]);
      a_hi[j] = std::max(a_hi[j], alpha[j]);
    }
  }
};

/// Upper bound on |grad Fbar| and |grad G| over the box, by interval
/// arithmetic on the residuals; |grad G| <= sqrt(1 + sigma_max^2) |r|.
inline double analytic_gradient_bound(const QuadraticBilevel& q, const IterateBox& box) {
  auto max_abs = [](double lo, double hi) { return std::max(std::abs(lo), std::abs(hi)); };
  double f_sq = 0.0;
  for (std::size_t i = 0; i < q.dim_w(); ++i) {
    const double m = max_abs(box.w_lo[i] - q.a[i], box.w_hi[i] - q.a[i]);
    f_sq += m * m;
  }
  for (std::size_t j = 0; j < q.dim_alpha(); ++j) {
    const double m = q.gamma * max_abs(box.a_lo[j] - q.b[j], box.a_hi[j] - q.b[j]);
    f_sq += m * m;
  }
  double r_sq = 0.0;
  for (std::size_t i = 0; i < q.dim_w(); ++i) {
    double lo = box.w_lo[i] - q.c[i], hi = box.w_hi[i] - q.c[i];
    for (std::size_t j = 0; j < q.dim_alpha(); ++j) {
      const double m = q.M.at(i, j);
      const double p1 = m * box.a_lo[j], p2 = m * box.a_hi[j];
      lo -= std::max(p1, p2);
      hi -= std::min(p1, p2);
    }
    const double r = max_abs(lo, hi);
    r_sq += r * r;
  }
  const double g = std::sqrt(1.0 + q.sigma_max * q.sigma_max) * std::sqrt(r_sq);
  return std::max(std::sqrt(f_sq), g);
}

// ---------------------------------------------------------------------------
// Runs and monitors
// ---------------------------------------------------------------------------

struct TraceRow {
  std::size_t t = 0;
  double grad_w_f_sq = 0.0;
  double beta = 0.0;
  double q_norm = 0.0;
  double lemma2_margin = 0.0;  // M_hat (2 delta + 1) - beta |grad Q|, M_hat over the box so far
  double run_min = 0.0;
};

struct ConvergenceTrace {
  std::vector<TraceRow> rows;
  IterateBox box;
  double observed_gradient_max = 0.0;  // running max of |grad Fbar|, |grad G(w)|, |grad G(w1)|
  ParamSet final_w, final_alpha;

  double min_grad_w_f_sq() const { return rows.empty() ? 0.0 : rows.back().run_min; }
};

struct ToyRunConfig {
  double xi = 0.5;
  double delta = 0.25;
  double eps_q = kDefaultEpsQ;
};

/// EBOMLC with plain SGD on both levels through the generic provider. The
/// schedule must satisfy the convergence preconditions; anything else is a
/// configuration error.
inline ConvergenceTrace run_ebomlc_toy(const QuadraticBilevel& q, std::size_t T, const LRSchedule& schedule,
                                       const ToyRunConfig& cfg, const Tensor* w0 = nullptr,
                                       const Tensor* alpha0 = nullptr) {
  if (T < 1) throw ConfigError("run_ebomlc_toy: T must be >= 1");
  schedule.validate();
  if (schedule.kind == ScheduleKind::kStepDecay) throw ConfigError("run_ebomlc_toy: needs a theorem1 or assumption3 schedule");
  if (schedule.horizon < T) throw ConfigError("run_ebomlc_toy: schedule horizon shorter than the run");
  const double L = q.lipschitz();
  const double cap = std::min((1.0 - cfg.xi) / L, 1.0);
  const EtaPair first = schedule_eta(schedule, 1, cfg.xi, L);
  if (schedule.kind == ScheduleKind::kFixedHorizon && !(first.alpha < 1.0)) {
    throw ConfigError("run_ebomlc_toy: eta_alpha = c/T must be < 1");
  }
  if (!(first.w < cap)) {
    throw ConfigError("run_ebomlc_toy: eta_w = " + std::to_string(first.w) + " violates eta_w < min((1 - xi)/L, 1) = " +
                      std::to_string(cap));
  }

  const QuadraticObjectives provider(q);
  ParamSet w = q.make_w(w0 ? *w0 : Tensor(Shape{q.dim_w()}));
  ParamSet alpha = q.make_alpha(alpha0 ? *alpha0 : Tensor(Shape{q.dim_alpha()}));
  SgdMomentum opt_w(0.0, 0.0), opt_alpha(0.0, 0.0);
  const BarrierConfig bc{cfg.xi, cfg.delta, cfg.eps_q, 1, false};
  const Batch none;

  ConvergenceTrace trace;
  trace.rows.reserve(T);
  double run_min = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t <= T; ++t) {
    const EtaPair eta = schedule_eta(schedule, t, cfg.xi, L);
    const Tensor w_before = w.at("w");
    const Tensor alpha_before = alpha.at("alpha");
    const Tensor w1 = [&] {
      Tensor r = q.residual(w_before, alpha_before);
      Tensor out = w_before;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] -= eta.w * r[i];
      return out;
    }();
    trace.box.include(w_before, alpha_before);
    trace.box.include(w1, alpha_before);

    const BarrierStep s = ebomlc_step(provider, w, alpha, opt_w, opt_alpha, none, std::span<const Batch>(&none, 1), bc,
                                      {eta.w, eta.alpha}, t);

    const double gf = std::sqrt(s.grad_w_f_norm * s.grad_w_f_norm + s.grad_alpha_f_norm * s.grad_alpha_f_norm);
    const double g0 = std::sqrt(provider.lower(q.make_w(w_before), q.make_alpha(alpha_before), none).grad_squared_norm());
    const double g1 = std::sqrt(provider.lower(q.make_w(w1), q.make_alpha(alpha_before), none).grad_squared_norm());
    trace.observed_gradient_max = std::max({trace.observed_gradient_max, gf, g0, g1});
    TraceRow row;
    row.t = t;
    row.grad_w_f_sq = s.grad_w_f_norm * s.grad_w_f_norm;
    row.beta = s.beta;
    row.q_norm = std::sqrt(s.q_sq_norm);
    row.lemma2_margin = analytic_gradient_bound(q, trace.box) * (2.0 * cfg.delta + 1.0) - s.beta * row.q_norm;
    run_min = std::min(run_min, row.grad_w_f_sq);
    row.run_min = run_min;
    trace.rows.push_back(row);
  }
  trace.final_w = std::move(w);
  trace.final_alpha = std::move(alpha);
  return trace;
}

struct Lemma2Check {
  bool pass = true;
  double worst_margin = std::numeric_limits<double>::infinity();
  std::size_t worst_t = 0;
  std::size_t violations = 0;
};

/// beta_t |grad Q_t| <= M_hat (2 delta + 1) at every row.
inline Lemma2Check check_lemma2(const ConvergenceTrace& trace, double delta, double m_hat) {
  Lemma2Check out;
  const double bound = m_hat * (2.0 * delta + 1.0);
  for (const auto& r : trace.rows) {
    const double margin = bound - r.beta * r.q_norm;
    if (margin < out.worst_margin) {
      out.worst_margin = margin;
      out.worst_t = r.t;
    }
    if (margin < 0.0) ++out.violations;
  }
  out.pass = out.violations == 0;
  return out;
}

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t used = 0;
  std::vector<std::string> notices;
};

/// Least-squares slope of log(min) against log(T). Non-positive minima are
/// skipped with a notice; the remaining points must number at least four and
/// span at least two decades of T.
inline SlopeFit fit_convergence_slope(const std::vector<std::pair<double, double>>& horizon_min) {
  SlopeFit fit;
  std::vector<double> xs, ys;
  for (const auto& [T, m] : horizon_min) {
    if (!(m > 0.0) || !std::isfinite(m) || !(T > 0.0)) {
      fit.notices.push_back("skipped T=" + std::to_string(T) + " (degenerate minimum)");
      continue;
    }
    xs.push_back(std::log(T));
    ys.push_back(std::log(m));
  }
  if (xs.size() < 4) throw ConfigError("fit_convergence_slope: need at least 4 usable horizons");
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  if (*hi - *lo < 2.0 * std::log(10.0) - 1e-12) throw ConfigError("fit_convergence_slope: horizons must span 2 decades");
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.used = xs.size();
  return fit;
}

inline void write_trace_csv(const ConvergenceTrace& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("write_trace_csv: cannot open '" + path + "'");
  os << "t,grad_w_F_sq,beta,q_norm,lemma2_margin,run_min\n" << std::setprecision(17);
  for (const auto& r : trace.rows) {
    os << r.t << ',' << r.grad_w_f_sq << ',' << r.beta << ',' << r.q_norm << ',' << r.lemma2_margin << ','
       << r.run_min << '\n';
  }
}

}  // namespace ebomlc
