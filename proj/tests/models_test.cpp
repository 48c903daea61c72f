#include <gtest/gtest.h>

#include "ebomlc/gradcheck.hpp"
#include "ebomlc/models.hpp"

using namespace ebomlc;

TEST(Models, InitIsSeededAndShaped) {
  const MainModel main({16, 64, 64, 10});
  const ParamSet a = main.init(5), b = main.init(5), c = main.init(6);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  EXPECT_EQ(a.at("fc0.weight").shape(), (Shape{16, 64}));
  EXPECT_EQ(a.at("fc2.bias").shape(), (Shape{10}));
  for (double v : a.at("fc0.weight").data()) EXPECT_LE(std::abs(v), 0.25);
  EXPECT_EQ(a.at("fc1.bias"), Tensor(Shape{64}));
}

TEST(Models, MainForwardRejectsWrongWidth) {
  const MainModel main({4, 8, 3});
  const ParamSet w = main.init(1);
  EXPECT_EQ(main.logits(w, Tensor(Shape{5, 4})).shape(), (Shape{5, 3}));
  EXPECT_THROW(main.logits(w, Tensor(Shape{5, 6})), DimensionError);
}

TEST(Models, MetaRowsAreDistributions) {
  const MetaModel meta(10, 8);
  const ParamSet alpha = meta.init(2);
  EXPECT_EQ(alpha.at("embed").shape(), (Shape{10, 128}));
  Rng rng(4);
  Tensor h(Shape{6, 8});
  for (double& v : h.data()) v = uniform(rng, 0.0, 1.0);
  const Tensor p = meta.predict(alpha, h, {0, 1, 2, 3, 4, 9});
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 10; ++c) {
      EXPECT_GT(p.at(r, c), 0.0);
      s += p.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_THROW(meta.predict(alpha, h, {0, 1, 2, 3, 4, 10}), DomainError);
  EXPECT_THROW(meta.predict(alpha, Tensor(Shape{6, 7}), {0, 1, 2, 3, 4, 5}), DimensionError);
}

TEST(Models, MetaOutputDependsOnTheNoisyLabel) {
  const MetaModel meta(4, 3, {16, 16});
  const ParamSet alpha = meta.init(9);
  const Tensor h = Tensor::matrix(2, 3, {0.1, 0.2, 0.3, 0.1, 0.2, 0.3});
  const Tensor p = meta.predict(alpha, h, {0, 1});
  EXPECT_GT(std::abs(p.at(0, 0) - p.at(1, 0)), 1e-6);
}

TEST(Models, MetaGradientMatchesFiniteDifferences) {
  const MetaModel meta(3, 4, {6, 5});
  const ParamSet alpha = meta.init(11);
  Rng rng(12);
  Tensor h(Shape{5, 4});
  for (double& v : h.data()) v = uniform(rng, 0.0, 1.0);
  const std::vector<std::size_t> labels{0, 1, 2, 1, 0};
  const Tensor weights = Tensor::vector({0.3, -1.0, 0.7});
  const ValueAndGradient fn = [&](const ParamSet& a) {
    Tape tape;
    Var out = sum(mul(meta.forward(bind(tape, a, "", true), tape.constant(h), labels), tape.constant(weights)));
    return std::make_pair(out.value().item(), backward(tape, out));
  };
  EXPECT_LT(finite_difference_check(fn, alpha, 1e-6).max_relative_error, 1e-4);
}

TEST(Models, FeatureExtractorIsFrozenAndNonNegative) {
  const FeatureExtractor h(16, 64, 3);
  const FeatureExtractor again(h.to_params());
  Rng rng(1);
  Tensor x(Shape{4, 16});
  for (double& v : x.data()) v = uniform(rng, -2.0, 2.0);
  const Tensor a = h.apply(x);
  EXPECT_EQ(a, again.apply(x));
  for (double v : a.data()) EXPECT_GE(v, 0.0);
  EXPECT_THROW(h.apply(Tensor(Shape{4, 15})), DimensionError);
}

TEST(Models, MinAbsReluInputScansAllRelus) {
  Tape tape;
  relu(tape.constant(Tensor::vector({-3.0, 0.5})));
  relu(tape.constant(Tensor::vector({0.25, 4.0})));
  EXPECT_EQ(min_abs_relu_input(tape), 0.25);
}

TEST(Models, ZeroWeightsGiveZeroLogits) {
  const MainModel main({3, 5, 4});
  ParamSet w = main.init(1);
  for (auto& e : w) e.value = Tensor(e.value.shape());
  const Tensor z = main.logits(w, Tensor::matrix(2, 3, {1, 2, 3, -1, 0, 4}));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Models, RowsAreBatchIndependent) {
  const MainModel main({3, 7, 4});
  const ParamSet w = main.init(2);
  const Tensor both = main.logits(w, Tensor::matrix(2, 3, {0.5, -1, 2, 3, 0.1, -0.2}));
  const Tensor first = main.logits(w, Tensor::matrix(1, 3, {0.5, -1, 2}));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(both.at(0, c), first.at(0, c));
}

TEST(Models, ZeroFinalMetaLayerIsUniform) {
  const MetaModel meta(5, 3, {4, 4}, 6);
  ParamSet alpha = meta.init(3);
  alpha.at("fc2.weight") = Tensor(alpha.at("fc2.weight").shape());
  alpha.at("fc2.bias") = Tensor(alpha.at("fc2.bias").shape());
  const Tensor p = meta.predict(alpha, Tensor::matrix(2, 3, {0.1, 0.2, 0.3, 1, 0, 2}), {0, 4});
  for (double v : p.data()) EXPECT_NEAR(v, 0.2, 1e-15);
  EXPECT_THROW(MetaModel(5, 3, {4, 4}, 0), ConfigError);
  EXPECT_THROW(MetaModel(5, 3, {4}), ConfigError);
}

TEST(Models, InitVarianceMatchesFanIn) {
  const ParamSet w = MainModel({16, 256, 2}).init(7);
  const Tensor& W = w.at("fc0.weight");
  double s = 0.0;
  for (double v : W.data()) s += v * v;
  const double var = s / static_cast<double>(W.size());
  const double bound = 1.0 / std::sqrt(16.0);
  EXPECT_NEAR(var, bound * bound / 3.0, 0.3 * bound * bound / 3.0);
}
