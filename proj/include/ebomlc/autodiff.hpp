#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ebomlc/error.hpp"
#include "ebomlc/param_set.hpp"
#include "ebomlc/tensor.hpp"

namespace ebomlc {

enum class OpKind : std::uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kScale,
  kMatMul,
  kConcat,
  kRelu,
  kLog,
  kExp,
  kSoftmax,
  kLogSoftmax,
  kGather,
  kMeanRows,
  kDot,
  kSumSquares,
  kSum,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kConcat: return "concat";
    case OpKind::kRelu: return "relu";
    case OpKind::kLog: return "log";
    case OpKind::kExp: return "exp";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kGather: return "gather";
    case OpKind::kMeanRows: return "mean_rows";
    case OpKind::kDot: return "dot";
    case OpKind::kSumSquares: return "sum_squares";
    case OpKind::kSum: return "sum";
  }
  return "?";
}

/// One recorded primitive. Its position in the tape is its node id.
struct TapeEntry {
  OpKind kind = OpKind::kConstant;
  std::array<std::int64_t, 2> inputs{-1, -1};
  Tensor value;
  double scalar = 0.0;               // kScale factor
  std::vector<std::size_t> indices;  // kGather rows, kMeanRows subset (empty = all)
  std::string name;                  // kLeaf
  bool requires_grad = false;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

namespace detail {

enum class Broadcast { kNone, kRow, kScalar };

inline Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (b.rank() == 0) return Broadcast::kScalar;
  if (b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.cols()) return Broadcast::kRow;
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " +
                       shape_str(a.shape()));
}

template <class F>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* op, F f) {
  const Broadcast bc = broadcast_kind(a, b, op);
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double yv = bc == Broadcast::kNone ? y[i] : bc == Broadcast::kRow ? y[i % k] : y[0];
    o[i] = f(x[i], yv);
  }
  return out;
}

// Reduce a gradient of a's shape down to b's (possibly broadcast) shape.
inline void accumulate_reduced(Tensor& gb, const Tensor& g, Broadcast bc) {
  auto dst = gb.data();
  auto src = g.data();
  if (bc == Broadcast::kNone) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  } else if (bc == Broadcast::kRow) {
    const std::size_t k = dst.size();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i % k] += src[i];
  } else {
    double s = 0.0;
    for (double v : src) s += v;
    dst[0] += s;
  }
}

inline Tensor eval_forward(const TapeEntry& e, const Tensor* a, const Tensor* b) {
  switch (e.kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      return e.value;
    case OpKind::kAdd:
      return binary_elementwise(*a, *b, "add", [](double x, double y) { return x + y; });
    case OpKind::kSub:
      return binary_elementwise(*a, *b, "sub", [](double x, double y) { return x - y; });
    case OpKind::kMul:
      return binary_elementwise(*a, *b, "mul", [](double x, double y) { return x * y; });
    case OpKind::kScale: {
      Tensor out = *a;
      for (double& v : out.data()) v *= e.scalar;
      return out;
    }
    case OpKind::kMatMul:
      return matmul(*a, *b);
    case OpKind::kConcat: {
      if (a->rank() != b->rank() || a->rank() < 1 || a->rows() != b->rows()) {
        throw DimensionError("concat: incompatible shapes " + shape_str(a->shape()) + " and " +
                             shape_str(b->shape()));
      }
      Shape s = a->shape();
      s.back() = a->cols() + b->cols();
      Tensor out(s);
      const std::size_t ka = a->cols(), kb = b->cols(), k = ka + kb;
      for (std::size_t r = 0; r < a->rows(); ++r) {
        std::copy_n(a->data().data() + r * ka, ka, out.data().data() + r * k);
        std::copy_n(b->data().data() + r * kb, kb, out.data().data() + r * k + ka);
      }
      return out;
    }
    case OpKind::kRelu: {
      Tensor out = *a;
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case OpKind::kLog: {
      Tensor out = *a;
      for (double& v : out.data()) {
        if (!(v > 0.0)) throw DomainError("log: non-positive entry " + std::to_string(v));
        v = std::log(v);
      }
      return out;
    }
    case OpKind::kExp: {
      Tensor out = *a;
      for (double& v : out.data()) v = std::exp(v);
      return out;
    }
    case OpKind::kSoftmax:
      if (a->rank() < 1) throw DimensionError("softmax: scalar input");
      return softmax_rows(*a);
    case OpKind::kLogSoftmax:
      if (a->rank() < 1) throw DimensionError("log_softmax: scalar input");
      return log_softmax_rows(*a);
    case OpKind::kGather: {
      if (a->rank() != 2) throw DimensionError("gather: table must be rank 2, got " + shape_str(a->shape()));
      const std::size_t width = a->dim(1);
      Tensor out(Shape{e.indices.size(), width});
      for (std::size_t i = 0; i < e.indices.size(); ++i) {
        const std::size_t r = e.indices[i];
        if (r >= a->dim(0)) {
          throw DomainError("gather: row " + std::to_string(r) + " out of range for table " +
                            shape_str(a->shape()));
        }
        std::copy_n(a->data().data() + r * width, width, out.data().data() + i * width);
      }
      return out;
    }
    case OpKind::kMeanRows: {
      if (a->rank() != 2) throw DimensionError("mean_rows: expected rank 2, got " + shape_str(a->shape()));
      const std::size_t k = a->dim(1);
      Tensor out(Shape{k});
      const std::size_t count = e.indices.empty() ? a->dim(0) : e.indices.size();
      if (count == 0) throw DimensionError("mean_rows: empty row set");
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t r = e.indices.empty() ? i : e.indices[i];
        if (r >= a->dim(0)) throw DomainError("mean_rows: row index out of range");
        for (std::size_t j = 0; j < k; ++j) out[j] += a->at(r, j);
      }
      for (double& v : out.data()) v /= static_cast<double>(count);
      return out;
    }
    case OpKind::kDot: {
      require_same_shape(*a, *b, "dot");
      double s = 0.0;
      for (std::size_t i = 0; i < a->size(); ++i) s += (*a)[i] * (*b)[i];
      return Tensor::scalar(s);
    }
    case OpKind::kSumSquares: {
      double s = 0.0;
      for (double v : a->data()) s += v * v;
      return Tensor::scalar(s);
    }
    case OpKind::kSum: {
      double s = 0.0;
      for (double v : a->data()) s += v;
      return Tensor::scalar(s);
    }
  }
  throw UsageError("eval_forward: unknown op");
}

}  // namespace detail

/// Dynamic computation graph; entries are appended in topological order.
class Tape {
 public:
  Tape() { entries_.reserve(64); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf. Names must be unique on a tape.
  Var parameter(std::string name, Tensor value) {
    for (const auto& e : entries_) {
      if (e.kind == OpKind::kLeaf && e.name == name) throw UsageError("Tape: duplicate leaf '" + name + "'");
    }
    TapeEntry e;
    e.kind = OpKind::kLeaf;
    e.value = std::move(value);
    e.name = std::move(name);
    e.requires_grad = true;
    return push(std::move(e));
  }

  Var constant(Tensor value) {
    TapeEntry e;
    e.kind = OpKind::kConstant;
    e.value = std::move(value);
    return push(std::move(e));
  }

  /// Records a primitive: evaluates its forward value and appends it.
  Var record(OpKind kind, Var a, Var b = {}, double scalar = 0.0, std::vector<std::size_t> indices = {}) {
    if (a.tape != this) throw UsageError("Tape: operands recorded on different tapes");
    TapeEntry e;
    e.kind = kind;
    e.scalar = scalar;
    e.indices = std::move(indices);
    e.inputs[0] = static_cast<std::int64_t>(a.id);
    e.requires_grad = entries_[a.id].requires_grad;
    const Tensor* bv = nullptr;
    if (b.tape != nullptr) {
      if (b.tape != this) throw UsageError("Tape: operands recorded on different tapes");
      e.inputs[1] = static_cast<std::int64_t>(b.id);
      e.requires_grad = e.requires_grad || entries_[b.id].requires_grad;
      bv = &entries_[b.id].value;
    }
    e.value = detail::eval_forward(e, &entries_[a.id].value, bv);
    return push(std::move(e));
  }

  const Tensor& value(Var v) const { return entries_.at(v.id).value; }
  std::size_t size() const { return entries_.size(); }
  const TapeEntry& entry(std::size_t i) const { return entries_.at(i); }

  /// Re-evaluates every non-leaf entry from its inputs and reports whether
  /// each recomputed value is bit-identical to the recorded one.
  bool replay_matches() const {
    for (const auto& e : entries_) {
      if (e.kind == OpKind::kLeaf || e.kind == OpKind::kConstant) continue;
      const Tensor* a = &entries_[static_cast<std::size_t>(e.inputs[0])].value;
      const Tensor* b = e.inputs[1] >= 0 ? &entries_[static_cast<std::size_t>(e.inputs[1])].value : nullptr;
      if (!(detail::eval_forward(e, a, b) == e.value)) return false;
    }
    return true;
  }

 private:
  Var push(TapeEntry e) {
    entries_.push_back(std::move(e));
    return Var{this, entries_.size() - 1};
  }

  std::vector<TapeEntry> entries_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

// --------------------------------------------------------------------------
// Primitives
// --------------------------------------------------------------------------

inline Var add(Var a, Var b) { return a.tape->record(OpKind::kAdd, a, b); }
inline Var sub(Var a, Var b) { return a.tape->record(OpKind::kSub, a, b); }
inline Var mul(Var a, Var b) { return a.tape->record(OpKind::kMul, a, b); }
inline Var scale(Var a, double s) { return a.tape->record(OpKind::kScale, a, {}, s); }
inline Var matmul(Var a, Var b) { return a.tape->record(OpKind::kMatMul, a, b); }
inline Var concat(Var a, Var b) { return a.tape->record(OpKind::kConcat, a, b); }
inline Var relu(Var a) { return a.tape->record(OpKind::kRelu, a); }
inline Var log(Var a) { return a.tape->record(OpKind::kLog, a); }
inline Var exp(Var a) { return a.tape->record(OpKind::kExp, a); }
inline Var softmax(Var a) { return a.tape->record(OpKind::kSoftmax, a); }
inline Var log_softmax(Var a) { return a.tape->record(OpKind::kLogSoftmax, a); }
inline Var gather_rows(Var table, std::vector<std::size_t> rows) {
  return table.tape->record(OpKind::kGather, table, {}, 0.0, std::move(rows));
}
inline Var mean_rows(Var a, std::vector<std::size_t> rows = {}) {
  return a.tape->record(OpKind::kMeanRows, a, {}, 0.0, std::move(rows));
}
inline Var dot(Var a, Var b) { return a.tape->record(OpKind::kDot, a, b); }
inline Var sum_squares(Var a) { return a.tape->record(OpKind::kSumSquares, a); }
inline Var sum(Var a) { return a.tape->record(OpKind::kSum, a); }

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

/// x W + b for x (n, in), W (in, out), b (out).
inline Var linear(Var x, Var weight, Var bias) { return add(matmul(x, weight), bias); }

// --------------------------------------------------------------------------
// Backward
// --------------------------------------------------------------------------

/// Reverse-mode gradients of a scalar node with respect to every
/// differentiable leaf on the tape, in leaf-creation order. Leaves the output
/// does not depend on receive zero tensors.
inline GradientMap backward(const Tape& tape, Var output) {
  if (output.tape != &tape) throw UsageError("backward: output belongs to a different tape");
  const Tensor& out_value = tape.value(output);
  if (out_value.size() != 1) {
    throw UsageError("backward: output must be scalar, got shape " + shape_str(out_value.shape()));
  }

  const std::size_t n = output.id + 1;
  std::vector<Tensor> grads(n);
  auto grad_of = [&](std::size_t id) -> Tensor& {
    if (grads[id].size() == 0 && tape.entry(id).value.size() != 0) grads[id] = Tensor::zeros_like(tape.entry(id).value);
    return grads[id];
  };
  grad_of(output.id)[0] = 1.0;

  for (std::size_t idx = n; idx-- > 0;) {
    const TapeEntry& e = tape.entry(idx);
    if (!e.requires_grad || e.kind == OpKind::kLeaf || e.kind == OpKind::kConstant) continue;
    if (grads[idx].size() == 0) continue;  // not on a path to the output
    const Tensor& g = grads[idx];
    const auto ia = static_cast<std::size_t>(e.inputs[0]);
    const TapeEntry& ea = tape.entry(ia);
    const bool need_a = ea.requires_grad;
    const TapeEntry* eb = e.inputs[1] >= 0 ? &tape.entry(static_cast<std::size_t>(e.inputs[1])) : nullptr;
    const std::size_t ib = eb ? static_cast<std::size_t>(e.inputs[1]) : 0;
    const bool need_b = eb && eb->requires_grad;
    const Tensor& a = ea.value;

    switch (e.kind) {
      case OpKind::kAdd:
      case OpKind::kSub: {
        const auto bc = detail::broadcast_kind(a, eb->value, "add");
        if (need_a) detail::accumulate_reduced(grad_of(ia), g, detail::Broadcast::kNone);
        if (need_b) {
          if (e.kind == OpKind::kAdd) {
            detail::accumulate_reduced(grad_of(ib), g, bc);
          } else {
            Tensor neg = g;
            for (double& v : neg.data()) v = -v;
            detail::accumulate_reduced(grad_of(ib), neg, bc);
          }
        }
        break;
      }
      case OpKind::kMul: {
        const Tensor& b = eb->value;
        const auto bc = detail::broadcast_kind(a, b, "mul");
        if (need_a) {
          Tensor& ga = grad_of(ia);
          const std::size_t k = a.cols();
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double bv = bc == detail::Broadcast::kNone ? b[i] : bc == detail::Broadcast::kRow ? b[i % k] : b[0];
            ga[i] += g[i] * bv;
          }
        }
        if (need_b) {
          Tensor prod = g;
          for (std::size_t i = 0; i < prod.size(); ++i) prod[i] *= a[i];
          detail::accumulate_reduced(grad_of(ib), prod, bc);
        }
        break;
      }
      case OpKind::kScale: {
        Tensor& ga = grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += e.scalar * g[i];
        break;
      }
      case OpKind::kMatMul: {
        const Tensor& b = eb->value;
        const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
        if (need_a) kernels::matmul_grad_a(g.data().data(), b.data().data(), grad_of(ia).data().data(), rows, inner, cols);
        if (need_b) kernels::matmul_grad_b(a.data().data(), g.data().data(), grad_of(ib).data().data(), rows, inner, cols);
        break;
      }
      case OpKind::kConcat: {
        const std::size_t ka = a.cols(), kb = eb->value.cols(), k = ka + kb;
        for (std::size_t r = 0; r < a.rows(); ++r) {
          if (need_a) {
            Tensor& ga = grad_of(ia);
            for (std::size_t j = 0; j < ka; ++j) ga[r * ka + j] += g[r * k + j];
          }
          if (need_b) {
            Tensor& gb = grad_of(ib);
            for (std::size_t j = 0; j < kb; ++j) gb[r * kb + j] += g[r * k + ka + j];
          }
        }
        break;
      }
      case OpKind::kRelu: {
        Tensor& ga = grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] > 0.0) ga[i] += g[i];
        }
        break;
      }
      case OpKind::kLog: {
        Tensor& ga = grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
        break;
      }
      case OpKind::kExp: {
        Tensor& ga = grad_of(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * e.value[i];
        break;
      }
      case OpKind::kSoftmax: {
        Tensor& ga = grad_of(ia);
        const std::size_t k = a.cols();
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double s = 0.0;
          for (std::size_t j = 0; j < k; ++j) s += g[r * k + j] * e.value[r * k + j];
          for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += e.value[r * k + j] * (g[r * k + j] - s);
        }
        break;
      }
      case OpKind::kLogSoftmax: {
        Tensor& ga = grad_of(ia);
        const std::size_t k = a.cols();
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double s = 0.0;
          for (std::size_t j = 0; j < k; ++j) s += g[r * k + j];
          for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += g[r * k + j] - std::exp(e.value[r * k + j]) * s;
        }
        break;
      }
      case OpKind::kGather: {
        Tensor& ga = grad_of(ia);
        const std::size_t width = a.dim(1);
        for (std::size_t i = 0; i < e.indices.size(); ++i) {
          const std::size_t r = e.indices[i];
          for (std::size_t j = 0; j < width; ++j) ga[r * width + j] += g[i * width + j];
        }
        break;
      }
      case OpKind::kMeanRows: {
        Tensor& ga = grad_of(ia);
        const std::size_t k = a.dim(1);
        const std::size_t count = e.indices.empty() ? a.dim(0) : e.indices.size();
        const double inv = 1.0 / static_cast<double>(count);
        for (std::size_t i = 0; i < count; ++i) {
          const std::size_t r = e.indices.empty() ? i : e.indices[i];
          for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += g[j] * inv;
        }
        break;
      }
      case OpKind::kDot: {
        const Tensor& b = eb->value;
        if (need_a) {
          Tensor& ga = grad_of(ia);
          for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[0] * b[i];
        }
        if (need_b) {
          Tensor& gb = grad_of(ib);
          for (std::size_t i = 0; i < a.size(); ++i) gb[i] += g[0] * a[i];
        }
        break;
      }
      case OpKind::kSumSquares: {
        Tensor& ga = grad_of(ia);
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += 2.0 * g[0] * a[i];
        break;
      }
      case OpKind::kSum: {
        Tensor& ga = grad_of(ia);
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[0];
        break;
      }
      case OpKind::kLeaf:
      case OpKind::kConstant:
        break;
    }
  }

  GradientMap out;
  for (std::size_t i = 0; i < tape.size(); ++i) {
    const TapeEntry& e = tape.entry(i);
    if (e.kind != OpKind::kLeaf) continue;
    if (i < n && grads[i].size() == e.value.size() && e.value.size() != 0) {
      out.add(e.name, std::move(grads[i]));
    } else {
      out.add(e.name, Tensor::zeros_like(e.value));
    }
  }
  return out;
}

// --------------------------------------------------------------------------
// Composite losses
// --------------------------------------------------------------------------

inline Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
  Tensor t(Shape{labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw DomainError("one_hot: label out of range");
    t.at(i, labels[i]) = 1.0;
  }
  return t;
}

inline void check_distribution_rows(const Tensor& target, const char* op) {
  const std::size_t k = target.cols();
  for (std::size_t r = 0; r < target.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = target[r * k + j];
      if (!(v >= 0.0)) throw DomainError(std::string(op) + ": negative or NaN target entry");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-8) {
      throw DomainError(std::string(op) + ": target row " + std::to_string(r) + " sums to " + std::to_string(s));
    }
  }
}

/// Mean over rows of -sum_k target_k * log softmax(logits)_k. Targets may be
/// soft and may themselves be differentiable.
inline Var soft_cross_entropy(Var logits, Var target) {
  require_same_shape(logits.value(), target.value(), "soft_cross_entropy");
  check_distribution_rows(target.value(), "soft_cross_entropy");
  const double rows = static_cast<double>(logits.value().rows());
  return scale(sum(mul(target, log_softmax(logits))), -1.0 / rows);
}

/// Mean over rows of -log(prob[label]) for rows that are already probabilities.
inline Var nll_of_probabilities(Var probs, const std::vector<std::size_t>& labels) {
  const Tensor& p = probs.value();
  if (p.rows() != labels.size()) throw DimensionError("nll_of_probabilities: label count mismatch");
  Var onehot = probs.tape->constant(one_hot(labels, p.cols()));
  Var ones = probs.tape->constant(Tensor(Shape{p.cols(), 1}, 1.0));
  Var picked = matmul(mul(onehot, probs), ones);
  return scale(sum(log(picked)), -1.0 / static_cast<double>(labels.size()));
}

}  // namespace ebomlc
