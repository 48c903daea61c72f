#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>

#include "ebomlc/autodiff.hpp"
#include "ebomlc/data.hpp"
#include "ebomlc/error.hpp"
#include "ebomlc/models.hpp"
#include "ebomlc/param_set.hpp"

namespace ebomlc {

struct ObjectiveEval {
  double value = 0.0;
  ParamSet grad_w;
  ParamSet grad_alpha;

  double grad_squared_norm() const { return squared_norm(grad_w) + squared_norm(grad_alpha); }
};

/// Value-function surrogate G(w_start) - G(w_end) on one batch, with both
/// endpoint w-gradients kept for monitoring. w_end is treated as a constant.
struct QEval {
  ObjectiveEval q;
  ParamSet w_end;
  double g_start = 0.0;
  double g_end = 0.0;
  ParamSet grad_w_start;  // grad_w G(w_start, alpha)
  ParamSet grad_w_end;    // grad_w G(w_end, alpha)
};

class ObjectiveProvider {
 public:
  virtual ~ObjectiveProvider() = default;

  virtual ObjectiveEval upper(const ParamSet& w, const ParamSet& alpha, const Batch& clean) const = 0;
  virtual ObjectiveEval lower(const ParamSet& w, const ParamSet& alpha, const Batch& noisy) const = 0;

  /// Lower loss with only the w-gradient required; grad_alpha is zero.
  virtual ObjectiveEval lower_w(const ParamSet& w, const ParamSet& alpha, const Batch& noisy) const {
    ObjectiveEval e = lower(w, alpha, noisy);
    e.grad_alpha = alpha.zeros_like();
    return e;
  }

  virtual QEval difference(const ParamSet& w_start, const ParamSet& w_end, const ParamSet& alpha,
                           const Batch& batch) const {
    const ObjectiveEval s = lower(w_start, alpha, batch);
    const ObjectiveEval e = lower(w_end, alpha, batch);
    QEval out;
    out.q.value = s.value - e.value;
    out.q.grad_w = s.grad_w - e.grad_w;
    out.q.grad_alpha = s.grad_alpha - e.grad_alpha;
    out.w_end = w_end;
    out.g_start = s.value;
    out.g_end = e.value;
    out.grad_w_start = s.grad_w;
    out.grad_w_end = e.grad_w;
    return out;
  }
};

namespace detail {
inline void require_finite(const ObjectiveEval& e, const char* op) {
  if (!std::isfinite(e.value) || !e.grad_w.all_finite() || !e.grad_alpha.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite value or gradient");
  }
}
}  // namespace detail

/// One gradient step on G from w over `batch`, then G(w) - G(w1) on the same
/// batch.
inline QEval one_step_Q(const ObjectiveProvider& p, const ParamSet& w, const ParamSet& alpha, const Batch& batch,
                        double eta_w) {
  if (!(eta_w >= 0.0)) throw ConfigError("one_step_Q: eta_w must be non-negative");
  const ObjectiveEval g = p.lower_w(w, alpha, batch);
  if (!g.grad_w.all_finite()) throw NumericError("one_step_Q: non-finite lower gradient");
  QEval out = p.difference(w, axpy(w, -eta_w, g.grad_w), alpha, batch);
  detail::require_finite(out.q, "one_step_Q");
  return out;
}

/// k gradient steps on G, step i on batches[i]; both endpoint evaluations
/// use batches[0].
inline QEval kstep_Q(const ObjectiveProvider& p, const ParamSet& w, const ParamSet& alpha,
                     std::span<const Batch> batches, std::size_t k, double eta_w) {
  if (k < 1) throw ConfigError("kstep_Q: k must be >= 1");
  if (batches.size() < k) throw ConfigError("kstep_Q: need one batch per inner step");
  if (!(eta_w >= 0.0)) throw ConfigError("kstep_Q: eta_w must be non-negative");
  ParamSet wk = w;
  for (std::size_t i = 0; i < k; ++i) {
    const ObjectiveEval g = p.lower_w(wk, alpha, batches[i]);
    if (!g.grad_w.all_finite()) throw NumericError("kstep_Q: non-finite lower gradient");
    wk = axpy(wk, -eta_w, g.grad_w);
  }
  QEval out = p.difference(w, wk, alpha, batches[0]);
  detail::require_finite(out.q, "kstep_Q");
  return out;
}

// ---------------------------------------------------------------------------
// Neural objectives
// ---------------------------------------------------------------------------

enum class MixtureSpace : std::uint8_t { kProbability, kLogit };

struct NeuralModels {
  MainModel main;
  MetaModel meta;
  FeatureExtractor extractor;
};

namespace detail {
inline void require_nonempty(const Batch& b, const char* op) {
  if (b.size() == 0) throw UsageError(std::string(op) + ": empty batch");
}

inline ObjectiveEval finish(const Tape& tape, Var loss, const ParamSet& w, const ParamSet& alpha, bool has_alpha) {
  const GradientMap g = backward(tape, loss);
  return {loss.value().item(), extract(g, "w.", w), has_alpha ? extract(g, "a.", alpha) : alpha.zeros_like()};
}
}  // namespace detail

/// Mean cross-entropy of the main model on clean labels; no alpha dependence.
inline ObjectiveEval upper_loss_F(const NeuralModels& m, const ParamSet& w, const ParamSet& alpha, const Batch& clean) {
  detail::require_nonempty(clean, "upper_loss_F");
  Tape tape;
  Var logits = m.main.forward(bind(tape, w, "w.", true), tape.constant(clean.features));
  Var loss = soft_cross_entropy(logits, tape.constant(one_hot(clean.labels, m.main.classes())));
  return detail::finish(tape, loss, w, alpha, false);
}

/// Mean cross-entropy of the main model against the meta model's soft labels,
/// differentiable in both w and alpha.
inline ObjectiveEval lower_loss_G(const NeuralModels& m, const ParamSet& w, const ParamSet& alpha, const Batch& noisy) {
  detail::require_nonempty(noisy, "lower_loss_G");
  Tape tape;
  Var target = m.meta.forward(bind(tape, alpha, "a.", true), tape.constant(m.extractor.apply(noisy.features)),
                              noisy.labels);
  Var logits = m.main.forward(bind(tape, w, "w.", true), tape.constant(noisy.features));
  return detail::finish(tape, soft_cross_entropy(logits, target), w, alpha, true);
}

/// Cross-entropy of rho * main + (1 - rho) * meta against the clean label.
inline ObjectiveEval mixture_upper_loss(const NeuralModels& m, const ParamSet& w, const ParamSet& alpha,
                                        const Batch& clean, double rho,
                                        MixtureSpace space = MixtureSpace::kProbability) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("mixture_upper_loss: rho must lie in (0, 1]");
  detail::require_nonempty(clean, "mixture_upper_loss");
  Tape tape;
  Var logits = m.main.forward(bind(tape, w, "w.", true), tape.constant(clean.features));
  Var meta = m.meta.forward(bind(tape, alpha, "a.", true), tape.constant(m.extractor.apply(clean.features)),
                            clean.labels);
  Var loss;
  if (space == MixtureSpace::kProbability) {
    loss = nll_of_probabilities(scale(softmax(logits), rho) + scale(meta, 1.0 - rho), clean.labels);
  } else {
    Var mixed = scale(logits, rho) + scale(log(meta), 1.0 - rho);
    loss = soft_cross_entropy(mixed, tape.constant(one_hot(clean.labels, m.main.classes())));
  }
  return detail::finish(tape, loss, w, alpha, true);
}

/// Neural provider. The upper objective is F when rho == 1 and the mixture
/// otherwise.
class NeuralObjectives : public ObjectiveProvider {
 public:
  NeuralObjectives(NeuralModels models, double rho, MixtureSpace space = MixtureSpace::kProbability)
      : m_(std::move(models)), rho_(rho), space_(space) {
    if (!(rho_ > 0.0 && rho_ <= 1.0)) throw ConfigError("NeuralObjectives: rho must lie in (0, 1]");
  }

  const NeuralModels& models() const { return m_; }
  double rho() const { return rho_; }

  ObjectiveEval upper(const ParamSet& w, const ParamSet& alpha, const Batch& clean) const override {
    if (rho_ == 1.0) return upper_loss_F(m_, w, alpha, clean);
    return mixture_upper_loss(m_, w, alpha, clean, rho_, space_);
  }

  ObjectiveEval lower(const ParamSet& w, const ParamSet& alpha, const Batch& noisy) const override {
    return lower_loss_G(m_, w, alpha, noisy);
  }

  ObjectiveEval lower_w(const ParamSet& w, const ParamSet& alpha, const Batch& noisy) const override {
    detail::require_nonempty(noisy, "lower_loss_G");
    Tape tape;
    Var target = tape.constant(m_.meta.predict(alpha, m_.extractor.apply(noisy.features), noisy.labels));
    Var logits = m_.main.forward(bind(tape, w, "w.", true), tape.constant(noisy.features));
    return detail::finish(tape, soft_cross_entropy(logits, target), w, alpha, false);
  }

  /// Both endpoints share one meta forward and one backward pass.
  QEval difference(const ParamSet& w_start, const ParamSet& w_end, const ParamSet& alpha,
                   const Batch& batch) const override {
    detail::require_nonempty(batch, "difference");
    Tape tape;
    Var x = tape.constant(batch.features);
    Var target = m_.meta.forward(bind(tape, alpha, "a.", true), tape.constant(m_.extractor.apply(batch.features)),
                                 batch.labels);
    Var g0 = soft_cross_entropy(m_.main.forward(bind(tape, w_start, "w0.", true), x), target);
    Var g1 = soft_cross_entropy(m_.main.forward(bind(tape, w_end, "w1.", true), x), target);
    Var q = g0 - g1;
    const GradientMap g = backward(tape, q);
    QEval out;
    out.g_start = g0.value().item();
    out.g_end = g1.value().item();
    out.q.value = q.value().item();
    out.grad_w_start = extract(g, "w0.", w_start);
    out.grad_w_end = scaled(extract(g, "w1.", w_end), -1.0);
    out.q.grad_w = out.grad_w_start - out.grad_w_end;
    out.q.grad_alpha = extract(g, "a.", alpha);
    out.w_end = w_end;
    return out;
  }

 private:
  NeuralModels m_;
  double rho_;
  MixtureSpace space_;
};

}  // namespace ebomlc
