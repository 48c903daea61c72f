#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ebomlc/autodiff.hpp"
#include "ebomlc/error.hpp"
#include "ebomlc/param_set.hpp"
#include "ebomlc/rng.hpp"
#include "ebomlc/tensor.hpp"

namespace ebomlc {

/// Parameters of one model placed on a tape, either as differentiable leaves
/// (named prefix + parameter name) or as constants.
struct BoundParams {
  std::string prefix;
  std::vector<std::pair<std::string, Var>> vars;

  Var operator[](std::string_view name) const {
    for (const auto& [n, v] : vars) {
      if (n == name) return v;
    }
    throw UsageError("BoundParams: no parameter '" + std::string(name) + "'");
  }
};

inline BoundParams bind(Tape& tape, const ParamSet& params, std::string prefix, bool differentiable) {
  BoundParams out{std::move(prefix), {}};
  for (const auto& e : params) {
    Var v = differentiable ? tape.parameter(out.prefix + e.name, e.value) : tape.constant(e.value);
    out.vars.emplace_back(e.name, v);
  }
  return out;
}

/// Gradients of one bound model, in the parameter order of `like`.
inline ParamSet extract(const GradientMap& grads, const std::string& prefix, const ParamSet& like) {
  ParamSet out;
  for (const auto& e : like) {
    if (const Tensor* g = grads.find(prefix + e.name)) {
      out.add(e.name, *g);
    } else {
      out.add(e.name, Tensor::zeros_like(e.value));
    }
  }
  return out;
}

/// Smallest |input| over all relu nodes on a tape; infinity when there are none.
inline double min_abs_relu_input(const Tape& tape) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tape.size(); ++i) {
    const auto& e = tape.entry(i);
    if (e.kind != OpKind::kRelu) continue;
    for (double v : tape.entry(static_cast<std::size_t>(e.inputs[0])).value.data()) m = std::min(m, std::abs(v));
  }
  return m;
}

/// Dense layers with weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) and zero
/// biases. Layer i is stored as "fc<i>.weight" (in, out) and "fc<i>.bias".
inline ParamSet init_params(std::uint64_t seed, const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) throw ConfigError("init_params: need at least input and output sizes");
  Rng rng(seed);
  ParamSet p;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const std::size_t fan_in = sizes[i], fan_out = sizes[i + 1];
    if (fan_in == 0 || fan_out == 0) throw ConfigError("init_params: zero layer width");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w(Shape{fan_in, fan_out});
    for (double& v : w.data()) v = uniform(rng, -bound, bound);
    p.add("fc" + std::to_string(i) + ".weight", std::move(w));
    p.add("fc" + std::to_string(i) + ".bias", Tensor(Shape{fan_out}));
  }
  return p;
}

namespace detail {
inline Var mlp(const BoundParams& p, Var x, std::size_t layers) {
  Var h = x;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string l = "fc" + std::to_string(i);
    h = linear(h, p[l + ".weight"], p[l + ".bias"]);
    if (i + 1 < layers) h = relu(h);
  }
  return h;
}
}  // namespace detail

/// Main classifier f_w: relu MLP emitting K logits.
class MainModel {
 public:
  explicit MainModel(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ConfigError("MainModel: need input and output sizes");
  }

  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t classes() const { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }

  ParamSet init(std::uint64_t seed) const { return init_params(seed, sizes_); }

  /// Logits (batch, K).
  Var forward(const BoundParams& w, Var x) const {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || xv.dim(1) != input_dim()) {
      throw DimensionError("main_forward: expected (batch, " + std::to_string(input_dim()) + "), got " +
                           shape_str(xv.shape()));
    }
    return detail::mlp(w, x, sizes_.size() - 1);
  }

  /// Untracked logits.
  Tensor logits(const ParamSet& w, const Tensor& x) const {
    Tape tape;
    Var out = forward(bind(tape, w, "", false), tape.constant(x));
    return out.value();
  }

 private:
  std::vector<std::size_t> sizes_;
};

/// Label-correction network g_alpha: embeds the noisy label, concatenates it
/// with frozen features and maps the result through three dense layers to a
/// distribution over C classes.
class MetaModel {
 public:
  static constexpr std::size_t kEmbeddingWidth = 128;

  MetaModel(std::size_t classes, std::size_t feature_dim, std::vector<std::size_t> hidden = {128, 128},
            std::size_t embedding_width = kEmbeddingWidth)
      : classes_(classes), feature_dim_(feature_dim), hidden_(std::move(hidden)), embedding_width_(embedding_width) {
    if (classes_ < 2) throw ConfigError("MetaModel: need at least two classes");
    if (embedding_width_ == 0) throw ConfigError("MetaModel: zero embedding width");
    if (hidden_.size() != 2) throw ConfigError("MetaModel: three dense layers require exactly two hidden widths");
  }

  std::size_t classes() const { return classes_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t embedding_width() const { return embedding_width_; }

  std::vector<std::size_t> layer_sizes() const {
    return {feature_dim_ + embedding_width_, hidden_[0], hidden_[1], classes_};
  }

  ParamSet init(std::uint64_t seed) const {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    ParamSet p;
    Tensor embed(Shape{classes_, embedding_width_});
    for (double& v : embed.data()) v = normal(rng);
    p.add("embed", std::move(embed));
    for (auto& e : init_params(mix_seed(seed), layer_sizes())) p.add(e.name, e.value);
    return p;
  }

  /// Soft labels (batch, C), each row a probability vector.
  Var forward(const BoundParams& alpha, Var features, const std::vector<std::size_t>& noisy_labels) const {
    const Tensor& fv = features.value();
    if (fv.rank() != 2 || fv.dim(1) != feature_dim_) {
      throw DimensionError("meta_forward: expected features (batch, " + std::to_string(feature_dim_) + "), got " +
                           shape_str(fv.shape()));
    }
    if (noisy_labels.size() != fv.dim(0)) throw DimensionError("meta_forward: label count mismatch");
    for (std::size_t y : noisy_labels) {
      if (y >= classes_) throw DomainError("meta_forward: label " + std::to_string(y) + " out of range");
    }
    Var emb = gather_rows(alpha["embed"], noisy_labels);
    return softmax(detail::mlp(alpha, concat(features, emb), 3));
  }

  Tensor predict(const ParamSet& alpha, const Tensor& features, const std::vector<std::size_t>& noisy_labels) const {
    Tape tape;
    return forward(bind(tape, alpha, "", false), tape.constant(features), noisy_labels).value();
  }

 private:
  std::size_t classes_;
  std::size_t feature_dim_;
  std::vector<std::size_t> hidden_;
  std::size_t embedding_width_;
};

/// Frozen random projection h(x) = relu(x W + b). Never placed on a tape as
/// a leaf, so it contributes no gradient entries.
class FeatureExtractor {
 public:
  FeatureExtractor(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed)
      : weight_(Shape{input_dim, output_dim}), bias_(Shape{output_dim}) {
    if (input_dim == 0 || output_dim == 0) throw ConfigError("FeatureExtractor: zero dimension");
    Rng rng(seed);
    const double bound = std::sqrt(3.0 / static_cast<double>(input_dim));
    for (double& v : weight_.data()) v = uniform(rng, -bound, bound);
    for (double& v : bias_.data()) v = uniform(rng, -0.1, 0.1);
  }

  explicit FeatureExtractor(const ParamSet& stored) : weight_(stored.at("weight")), bias_(stored.at("bias")) {
    if (weight_.rank() != 2 || bias_.rank() != 1 || bias_.dim(0) != weight_.dim(1)) {
      throw FormatError("FeatureExtractor: inconsistent stored shapes");
    }
  }

  std::size_t input_dim() const { return weight_.dim(0); }
  std::size_t output_dim() const { return weight_.dim(1); }

  Tensor apply(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != input_dim()) {
      throw DimensionError("feature_extract: expected (batch, " + std::to_string(input_dim()) + "), got " +
                           shape_str(x.shape()));
    }
    Tensor out = matmul(x, weight_);
    const std::size_t k = output_dim();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i] + bias_[i % k]);
    return out;
  }

  ParamSet to_params() const {
    ParamSet p;
    p.add("weight", weight_);
    p.add("bias", bias_);
    return p;
  }

 private:
  Tensor weight_;
  Tensor bias_;
};

}  // namespace ebomlc
