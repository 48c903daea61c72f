#include <gtest/gtest.h>

#include "ebomlc/toy.hpp"

using namespace ebomlc;

TEST(Quadratic, SingularValuesAndShapes) {
  const QuadraticBilevel q = make_quadratic(3, 10, 4, 0.5);
  EXPECT_EQ(q.dim_w(), 10u);
  EXPECT_EQ(q.dim_alpha(), 4u);
  EXPECT_DOUBLE_EQ(q.sigma_max, 1.0);
  EXPECT_DOUBLE_EQ(q.sigma_min, 0.1);
  EXPECT_DOUBLE_EQ(q.lipschitz(), 2.0);
  // M has orthonormal U: |M e_j| equals the column's singular-weighted norm, at most 1.
  for (std::size_t j = 0; j < 4; ++j) {
    double n = 0.0;
    for (std::size_t i = 0; i < 10; ++i) n += q.M.at(i, j) * q.M.at(i, j);
    EXPECT_LE(n, 1.0 + 1e-12);
  }
}

TEST(Quadratic, SeedsAreReproducible) {
  EXPECT_EQ(make_quadratic(7, 6, 3, 1.0).M, make_quadratic(7, 6, 3, 1.0).M);
  EXPECT_NE(make_quadratic(7, 6, 3, 1.0).M, make_quadratic(8, 6, 3, 1.0).M);
}

TEST(Quadratic, Errors) {
  EXPECT_THROW(make_quadratic(0, 0, 1, 1.0), ConfigError);
  EXPECT_THROW(make_quadratic(0, 3, 4, 1.0), ConfigError);
  EXPECT_THROW(make_quadratic(0, 4, 2, -1.0), ConfigError);
}

TEST(Quadratic, ResidualVanishesAtLowerMinimizer) {
  const QuadraticBilevel q = make_quadratic(1, 5, 2, 1.0);
  const Tensor alpha = Tensor::vector({0.4, -1.1});
  Tensor w = q.residual(Tensor(Shape{5}), alpha);
  for (double& v : w.data()) v = -v;
  const Tensor r = q.residual(w, alpha);
  for (double v : r.data()) EXPECT_NEAR(v, 0.0, 1e-15);
  const ObjectiveEval z = q.closed_form_q(w, alpha, 0.3);
  EXPECT_NEAR(z.value, 0.0, 1e-30);
}

TEST(ToyRun, GradientBoundCoversObservedGradients) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const QuadraticBilevel q = make_quadratic(seed, 8, 3, 1.0);
    const ConvergenceTrace tr = run_ebomlc_toy(q, 500, LRSchedule::assumption3(0.05, 500), ToyRunConfig{});
    EXPECT_EQ(tr.rows.size(), 500u);
    EXPECT_LE(tr.observed_gradient_max, analytic_gradient_bound(q, tr.box) * (1.0 + 1e-12));
    const Lemma2Check l = check_lemma2(tr, 0.25, analytic_gradient_bound(q, tr.box));
    EXPECT_TRUE(l.pass) << "seed " << seed << " margin " << l.worst_margin;
    for (const auto& r : tr.rows) EXPECT_GE(r.lemma2_margin, 0.0);
  }
}

TEST(ToyRun, RunningMinimumIsMonotone) {
  const QuadraticBilevel q = make_quadratic(2, 6, 2, 1.0);
  const ConvergenceTrace tr = run_ebomlc_toy(q, 2000, LRSchedule::theorem1(0.1, 0.2, 2000), ToyRunConfig{});
  for (std::size_t i = 1; i < tr.rows.size(); ++i) EXPECT_LE(tr.rows[i].run_min, tr.rows[i - 1].run_min);
  EXPECT_LT(tr.min_grad_w_f_sq(), tr.rows.front().grad_w_f_sq);
}

TEST(ToyRun, PreconditionErrors) {
  const QuadraticBilevel q = make_quadratic(0, 4, 2, 1.0);  // L = 2, cap = 0.25 at xi = 0.5
  EXPECT_THROW(run_ebomlc_toy(q, 0, LRSchedule::assumption3(0.05, 10), {}), ConfigError);
  EXPECT_THROW(run_ebomlc_toy(q, 20, LRSchedule::assumption3(0.05, 10), {}), ConfigError);
  EXPECT_THROW(run_ebomlc_toy(q, 10, LRSchedule::assumption3(0.3, 10), {}), ConfigError);
  EXPECT_THROW(run_ebomlc_toy(q, 10, LRSchedule::theorem1(20.0, 0.1, 10), {}), ConfigError);
  EXPECT_THROW(run_ebomlc_toy(q, 10, LRSchedule::step_decay(0.1, 0.01, 0.1, {5}), {}), ConfigError);
  EXPECT_NO_THROW(run_ebomlc_toy(q, 10, LRSchedule::assumption3(0.2, 10), {}));
}

TEST(BarrierBound, CountsViolations) {
  ConvergenceTrace tr;
  for (std::size_t t = 1; t <= 3; ++t) {
    TraceRow r;
    r.t = t;
    r.beta = 1.0;
    r.q_norm = static_cast<double>(t);
    tr.rows.push_back(r);
  }
  const Lemma2Check c = check_lemma2(tr, 0.25, 1.5);  // bound 2.25
  EXPECT_EQ(c.violations, 1u);
  EXPECT_EQ(c.worst_t, 3u);
  EXPECT_DOUBLE_EQ(c.worst_margin, -0.75);
  EXPECT_FALSE(c.pass);
}

TEST(SlopeFit, RecoversPowerLaw) {
  std::vector<std::pair<double, double>> pts;
  for (double T : {1e2, 1e3, 1e4, 1e5}) pts.emplace_back(T, 3.0 * std::pow(T, -0.5));
  const SlopeFit f = fit_convergence_slope(pts);
  EXPECT_NEAR(f.slope, -0.5, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-12);
  EXPECT_EQ(f.used, 4u);
}

TEST(SlopeFit, Errors) {
  EXPECT_THROW(fit_convergence_slope({{1e2, 1.0}, {1e3, 0.5}, {1e4, 0.1}}), ConfigError);
  EXPECT_THROW(fit_convergence_slope({{10, 1.0}, {20, 0.5}, {40, 0.2}, {80, 0.1}}), ConfigError);
  const SlopeFit f = fit_convergence_slope({{1e2, 1.0}, {1e3, 0.5}, {1e4, 0.0}, {1e5, 0.1}, {1e6, 0.05}});
  EXPECT_EQ(f.used, 4u);
  EXPECT_EQ(f.notices.size(), 1u);
}

TEST(Quadratic, OneStepSurrogateIsContraction) {
  Rng rng(17);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const QuadraticBilevel q = make_quadratic(seed, 8, 3, 1.0);
    const QuadraticObjectives p(q);
    Tensor w(Shape{8}), alpha(Shape{3});
    for (double& v : w.data()) v = uniform(rng, -2.0, 2.0);
    for (double& v : alpha.data()) v = uniform(rng, -2.0, 2.0);
    const double eta = uniform(rng, 0.05, 0.95) / q.lipschitz();
    const std::vector<Batch> batches(10);
    const double one = std::sqrt(one_step_Q(p, q.make_w(w), q.make_alpha(alpha), batches[0], eta).q.grad_squared_norm());
    for (std::size_t T : {2, 5, 10}) {
      const QEval qt = kstep_Q(p, q.make_w(w), q.make_alpha(alpha), batches, T, eta);
      EXPECT_LE(one, std::sqrt(qt.q.grad_squared_norm()) * (1.0 + 1e-12)) << "seed " << seed << " T " << T;
    }
  }
}
