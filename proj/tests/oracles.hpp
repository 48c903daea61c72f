#pragma once

#include <cmath>
#include <vector>

// Independent numerical solvers used as test oracles.

namespace oracle {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// min 0.5 |lambda - g|^2  s.t.  a . lambda >= phi, by the augmented
/// Lagrangian method with gradient-descent inner solves.
inline std::vector<double> barrier_qp(const std::vector<double>& g, const std::vector<double>& a, double phi) {
  const double aa = dot(a, a);
  const double rho = 10.0 / aa;
  const double step = 1.0 / (1.0 + rho * aa);
  std::vector<double> lambda = g;
  double mu = 0.0;
  for (int outer = 0; outer < 200; ++outer) {
    for (int inner = 0; inner < 5000; ++inner) {
      const double c = dot(a, lambda) - phi;
      const double m = std::max(0.0, mu - rho * c);
      double gnorm = 0.0;
      for (std::size_t i = 0; i < lambda.size(); ++i) {
        const double gi = (lambda[i] - g[i]) - m * a[i];
        lambda[i] -= step * gi;
        gnorm += gi * gi;
      }
      if (gnorm < 1e-30) break;
    }
    const double mu_next = std::max(0.0, mu - rho * (dot(a, lambda) - phi));
    if (std::abs(mu_next - mu) < 1e-15 * (1.0 + mu)) break;
    mu = mu_next;
  }
  return lambda;
}

}  // namespace oracle
