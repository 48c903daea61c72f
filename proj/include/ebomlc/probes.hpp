#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "ebomlc/gradcheck.hpp"
#include "ebomlc/models.hpp"
#include "ebomlc/objectives.hpp"
#include "ebomlc/rng.hpp"

namespace ebomlc {

struct ObjectiveAudit {
  std::string objective;
  std::size_t probes = 0;
  std::size_t coordinates = 0;
  std::size_t skipped = 0;  // stencils that crossed a relu kink
  double max_relative_error = 0.0;
  std::string worst_tensor;
};

/// A random small-model probe: models, parameters and one clean and one
/// noisy batch.
struct GradientProbe {
  NeuralModels models;
  ParamSet w, alpha;
  Batch clean, noisy;
  double rho = 0.2;
  double eta = 0.1;
};

inline GradientProbe make_gradient_probe(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, 1 << 20);
  auto between = [&](std::size_t lo, std::size_t hi) { return lo + pick(rng) % (hi - lo + 1); };
  const std::size_t d = between(3, 6), C = between(2, 4), feat = between(2, 5);
  const std::size_t h = between(3, 6), mh0 = between(3, 6), mh1 = between(3, 6), emb = between(3, 8);
  GradientProbe p{NeuralModels{MainModel({d, h, C}), MetaModel(C, feat, {mh0, mh1}, emb),
                               FeatureExtractor(d, feat, derive_seed(seed, {kStreamExtractor}))},
                  {}, {}, {}, {}, uniform(rng, 0.05, 1.0), uniform(rng, 0.01, 0.5)};
  p.w = p.models.main.init(derive_seed(seed, {kStreamMainInit}));
  p.alpha = p.models.meta.init(derive_seed(seed, {kStreamMetaInit}));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (ParamSet* ps : {&p.w, &p.alpha}) {
    for (std::size_t i = 0; i < ps->size(); ++i) {
      for (double& v : ps->entry(i).value.data()) v += 0.3 * normal(rng);
    }
  }
  auto batch = [&](std::size_t n) {
    Batch b;
    b.features = Tensor(Shape{n, d});
    for (double& v : b.features.data()) v = normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
      b.labels.push_back(pick(rng) % C);
      b.indices.push_back(i);
    }
    return b;
  };
  p.clean = batch(between(2, 5));
  p.noisy = batch(between(3, 8));
  return p;
}

namespace detail {
inline Tensor scaled_tensor(Tensor t, double s) {
  for (double& v : t.data()) v *= s;
  return t;
}

inline ParamSet join(const ParamSet& w, const ParamSet& alpha) {
  ParamSet out;
  for (const auto& e : w) out.add("w." + e.name, e.value);
  for (const auto& e : alpha) out.add("a." + e.name, e.value);
  return out;
}

inline void split(const ParamSet& joint, ParamSet& w, ParamSet& alpha) {
  for (auto& e : w) e.value = joint.at("w." + e.name);
  for (auto& e : alpha) e.value = joint.at("a." + e.name);
}

inline void hash_relu_signs(const Tape& tape, std::uint64_t& h) {
  for (std::size_t i = 0; i < tape.size(); ++i) {
    const auto& e = tape.entry(i);
    if (e.kind != OpKind::kRelu) continue;
    for (double v : tape.entry(static_cast<std::size_t>(e.inputs[0])).value.data()) {
      h = (h ^ (v > 0.0 ? 0x9e3779b97f4a7c15ULL : 0x632be59bd9b4e019ULL)) * 0x100000001b3ULL;
    }
  }
}

/// Relu activation pattern of both networks over both batches.
inline std::uint64_t activation_signature(const GradientProbe& p, const ParamSet& w, const ParamSet& alpha) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Batch* b : {&p.clean, &p.noisy}) {
    Tape tape;
    p.models.main.forward(bind(tape, w, "", false), tape.constant(b->features));
    p.models.meta.forward(bind(tape, alpha, "", false), tape.constant(p.models.extractor.apply(b->features)), b->labels);
    hash_relu_signs(tape, h);
  }
  return h;
}
}  // namespace detail

/// Five-point finite-difference audit of the four objectives: F, G, the
/// one-step surrogate and the mixture loss. Coordinates whose stencil crosses
/// a relu kink are skipped and counted.
inline std::vector<ObjectiveAudit> audit_objective_gradients(std::uint64_t seed, std::size_t probes, double eps = 1e-3) {
  std::vector<ObjectiveAudit> audits(4);
  audits[0].objective = "F";
  audits[1].objective = "G";
  audits[2].objective = "Q";
  audits[3].objective = "Fbar";
  for (std::size_t n = 0; n < probes; ++n) {
    GradientProbe p = make_gradient_probe(derive_seed(seed, {n}));
    const NeuralObjectives provider(p.models, p.rho);
    const ParamSet w1 = axpy(p.w, -p.eta, provider.lower_w(p.w, p.alpha, p.noisy).grad_w);

    ParamSet w = p.w, alpha = p.alpha, w_end = w1;
    auto wrap = [&](auto objective) {
      return [&, objective](const ParamSet& joint) {
        detail::split(joint, w, alpha);
        const ObjectiveEval e = objective(w, alpha);
        return std::pair<double, GradientMap>{e.value, detail::join(e.grad_w, e.grad_alpha)};
      };
    };
    // Q is checked as the joint map (w, w1, alpha) -> G(w, alpha) - G(w1, alpha);
    // its w-gradient is the difference of the two endpoint blocks.
    const ValueAndGradient q_fn = [&](const ParamSet& joint) {
      detail::split(joint, w, alpha);
      for (auto& e : w_end) e.value = joint.at("e." + e.name);
      const QEval q = provider.difference(w, w_end, alpha, p.noisy);
      GradientMap grad = detail::join(q.grad_w_start, q.q.grad_alpha);
      for (const auto& e : q.grad_w_end) grad.add("e." + e.name, detail::scaled_tensor(e.value, -1.0));
      return std::pair<double, GradientMap>{q.q.value, grad};
    };
    const std::vector<ValueAndGradient> fns{
        wrap([&](const ParamSet& ww, const ParamSet& aa) { return upper_loss_F(p.models, ww, aa, p.clean); }),
        wrap([&](const ParamSet& ww, const ParamSet& aa) { return lower_loss_G(p.models, ww, aa, p.noisy); }),
        q_fn,
        wrap([&](const ParamSet& ww, const ParamSet& aa) {
          return mixture_upper_loss(p.models, ww, aa, p.clean, p.rho);
        }),
    };
    const ParamSet point = detail::join(p.w, p.alpha);
    ParamSet q_point = point;
    for (const auto& e : w1) q_point.add("e." + e.name, e.value);
    ParamSet sw = p.w, sa = p.alpha, se = w1;
    const PieceSignature piece = [&](const ParamSet& joint) {
      detail::split(joint, sw, sa);
      std::uint64_t h = detail::activation_signature(p, sw, sa);
      if (joint.find("e.fc0.weight") != nullptr) {
        for (auto& e : se) e.value = joint.at("e." + e.name);
        h ^= detail::activation_signature(p, se, sa) * 31;
      }
      return h;
    };
    for (std::size_t i = 0; i < fns.size(); ++i) {
      const GradCheckResult r = finite_difference_check(fns[i], i == 2 ? q_point : point, eps, 4, piece);
      ++audits[i].probes;
      audits[i].coordinates += r.checked;
      audits[i].skipped += r.skipped;
      if (r.max_relative_error >= audits[i].max_relative_error) {
        audits[i].max_relative_error = r.max_relative_error;
        audits[i].worst_tensor = r.worst_tensor;
      }
    }
  }
  return audits;
}

}  // namespace ebomlc
