#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "ebomlc/error.hpp"
#include "ebomlc/param_set.hpp"

namespace ebomlc {

/// Scalar function of a parameter collection returning its value and
/// autodiff gradient.
using ValueAndGradient = std::function<std::pair<double, GradientMap>(const ParamSet&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose stencil left the smooth piece
};

/// Identifies the smooth piece containing a point, e.g. a hash of relu
/// activation signs. Stencils spanning two pieces are skipped.
using PieceSignature = std::function<std::uint64_t(const ParamSet&)>;

/// Central differences against the supplied autodiff gradient, coordinate by
/// coordinate: max |fd - ad| / (|ad| + 1e-8). `order` 4 uses the five-point
/// stencil.
inline GradCheckResult finite_difference_check(const ValueAndGradient& fn, const ParamSet& point, double eps,
                                               int order = 2, const PieceSignature& piece = {}) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ConfigError("finite_difference_check: eps must lie in [1e-7, 1e-3]");
  if (order != 2 && order != 4) throw ConfigError("finite_difference_check: order must be 2 or 4");
  const auto [value, grad] = fn(point);
  if (!std::isfinite(value)) throw NumericError("finite_difference_check: non-finite function value");
  if (!grad.same_structure(point)) throw DimensionError("finite_difference_check: gradient structure mismatch");

  GradCheckResult result;
  ParamSet probe = point;
  const std::uint64_t home = piece ? piece(point) : 0;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    auto& entry = probe.entry(t);
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const double orig = entry.value[i];
      bool straddles = false;
      auto at = [&](double offset) {
        entry.value[i] = orig + offset;
        if (piece && piece(probe) != home) straddles = true;
        const double v = fn(probe).first;
        entry.value[i] = orig;
        if (!std::isfinite(v)) throw NumericError("finite_difference_check: non-finite function value");
        return v;
      };
      const double fd = order == 2 ? (at(eps) - at(-eps)) / (2.0 * eps)
                                   : (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
      if (straddles) {
        ++result.skipped;
        continue;
      }
      ++result.checked;
      const double ad = grad.entry(t).value[i];
      const double rel = std::abs(fd - ad) / (std::abs(ad) + 1e-8);
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_tensor = entry.name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace ebomlc
