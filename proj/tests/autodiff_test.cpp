#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "ebomlc/autodiff.hpp"
#include "ebomlc/gradcheck.hpp"
#include "ebomlc/rng.hpp"

using namespace ebomlc;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = uniform(rng, lo, hi);
  return t;
}

// Wraps a tape-building expression into a value-and-gradient function.
ValueAndGradient wrap(std::function<Var(Tape&, const std::vector<Var>&)> build) {
  return [build](const ParamSet& p) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& e : p) leaves.push_back(tape.parameter(e.name, e.value));
    Var out = build(tape, leaves);
    return std::make_pair(out.value().item(), backward(tape, out));
  };
}

double check(const ValueAndGradient& fn, const ParamSet& point) {
  return finite_difference_check(fn, point, 1e-6).max_relative_error;
}

}  // namespace

TEST(Autodiff, ForwardValuesOfPrimitives) {
  Tape tape;
  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var b = tape.constant(Tensor::vector({10, 20}));
  EXPECT_EQ((a + b).value(), Tensor::matrix(2, 2, {11, 22, 13, 24}));
  EXPECT_EQ((a - tape.constant(Tensor::scalar(1))).value(), Tensor::matrix(2, 2, {0, 1, 2, 3}));
  EXPECT_EQ((a * b).value(), Tensor::matrix(2, 2, {10, 40, 30, 80}));
  EXPECT_EQ(sum(a).value().item(), 10);
  EXPECT_EQ(sum_squares(a).value().item(), 30);
  EXPECT_EQ(dot(a, a).value().item(), 30);
  EXPECT_EQ(mean_rows(a).value(), Tensor::vector({2, 3}));
  EXPECT_EQ(mean_rows(a, {1}).value(), Tensor::vector({3, 4}));
  EXPECT_EQ(gather_rows(a, {1, 1, 0}).value(), Tensor::matrix(3, 2, {3, 4, 3, 4, 1, 2}));
  EXPECT_EQ(concat(a, a).value(), Tensor::matrix(2, 4, {1, 2, 1, 2, 3, 4, 3, 4}));
  EXPECT_EQ(relu(tape.constant(Tensor::vector({-1, 0, 2}))).value(), Tensor::vector({0, 0, 2}));
}

TEST(Autodiff, ErrorsAreTyped) {
  Tape tape;
  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_THROW(log(tape.constant(Tensor::vector({1.0, 0.0}))), DomainError);
  EXPECT_THROW(gather_rows(a, {2}), DomainError);
  EXPECT_THROW(a + tape.constant(Tensor::vector({1, 2, 3})), DimensionError);
  EXPECT_THROW(matmul(a, tape.constant(Tensor::matrix(3, 1, {1, 2, 3}))), DimensionError);
  EXPECT_THROW(backward(tape, a), UsageError);
  Tape other;
  Var c = other.constant(Tensor::scalar(1));
  EXPECT_THROW(add(a, c), UsageError);
  EXPECT_THROW(backward(tape, c), UsageError);
  tape.parameter("p", Tensor::scalar(1));
  EXPECT_THROW(tape.parameter("p", Tensor::scalar(2)), UsageError);
}

TEST(Autodiff, DotProductGradientIsTheOtherOperand) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::vector({1, 2, 3}));
  Var y = tape.parameter("y", Tensor::vector({4, 5, 6}));
  const GradientMap g = backward(tape, dot(x, y));
  EXPECT_EQ(g.at("x"), Tensor::vector({4, 5, 6}));
  EXPECT_EQ(g.at("y"), Tensor::vector({1, 2, 3}));
}

TEST(Autodiff, UnreachedLeavesGetZeros) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::vector({1, 2}));
  tape.parameter("unused", Tensor::vector({7, 7, 7}));
  const GradientMap g = backward(tape, sum(x));
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g.entry(1).name, "unused");
  EXPECT_EQ(g.at("unused"), Tensor(Shape{3}));
}

TEST(Autodiff, FiniteDifferencesPerPrimitive) {
  Rng rng(7);
  ParamSet p;
  p.add("a", random_tensor({3, 4}, rng));
  p.add("b", random_tensor({4, 2}, rng));
  p.add("r", random_tensor({4}, rng));
  p.add("s", random_tensor({}, rng, 0.5, 1.5));

  EXPECT_LT(check(wrap([](Tape&, const std::vector<Var>& v) { return sum_squares(matmul(v[0], v[1])); }), p), 1e-6);
  EXPECT_LT(check(wrap([](Tape&, const std::vector<Var>& v) { return sum_squares(v[0] + v[2]); }), p), 1e-6);
  EXPECT_LT(check(wrap([](Tape&, const std::vector<Var>& v) { return sum_squares(v[0] - v[3]); }), p), 1e-6);
  EXPECT_LT(check(wrap([](Tape&, const std::vector<Var>& v) { return sum(v[0] * v[2] * v[3]); }), p), 1e-6);
  EXPECT_LT(check(wrap([](Tape&, const std::vector<Var>& v) { return sum(exp(scale(v[0], 0.7))); }), p), 1e-6);
  EXPECT_LT(check(wrap([](Tape&, const std::vector<Var>& v) { return sum(log(exp(v[0]) + v[3])); }), p), 1e-6);
  EXPECT_LT(check(wrap([](Tape&, const std::vector<Var>& v) {
              return sum_squares(softmax(v[0]) * v[2]);
            }), p), 1e-6);
  EXPECT_LT(check(wrap([](Tape&, const std::vector<Var>& v) { return sum(log_softmax(v[0]) * v[2]); }), p), 1e-6);
  EXPECT_LT(check(wrap([](Tape&, const std::vector<Var>& v) {
              return sum_squares(gather_rows(v[0], {2, 0, 2}));
            }), p), 1e-6);
  EXPECT_LT(check(wrap([](Tape&, const std::vector<Var>& v) {
              return sum_squares(mean_rows(v[0], {0, 2})) + dot(mean_rows(v[0]), v[2]);
            }), p), 1e-6);
  EXPECT_LT(check(wrap([](Tape&, const std::vector<Var>& v) {
              return sum_squares(concat(v[0], matmul(v[0], v[1])));
            }), p), 1e-6);
}

TEST(Autodiff, ReluAwayFromKinkMatchesFiniteDifferences) {
  ParamSet p;
  p.add("x", Tensor::matrix(2, 3, {-0.8, 0.3, 1.2, 0.5, -0.4, -2.0}));
  const auto fn = wrap([](Tape&, const std::vector<Var>& v) { return sum_squares(relu(v[0])); });
  EXPECT_LT(check(fn, p), 1e-6);
}

TEST(Autodiff, SoftCrossEntropyOfZeroLogitsIsLogK) {
  Tape tape;
  Var logits = tape.parameter("z", Tensor(Shape{4, 10}));
  Var target = tape.constant(one_hot({0, 3, 9, 1}, 10));
  Var loss = soft_cross_entropy(logits, target);
  EXPECT_NEAR(loss.value().item(), std::log(10.0), 1e-15);
  const GradientMap g = backward(tape, loss);
  // d/dz = (softmax - target) / rows
  EXPECT_NEAR(g.at("z").at(0, 0), (0.1 - 1.0) / 4.0, 1e-15);
  EXPECT_NEAR(g.at("z").at(0, 1), 0.1 / 4.0, 1e-15);
}

TEST(Autodiff, SoftCrossEntropyRejectsNonDistributionTargets) {
  Tape tape;
  Var logits = tape.constant(Tensor(Shape{1, 3}));
  EXPECT_THROW(soft_cross_entropy(logits, tape.constant(Tensor::matrix(1, 3, {0.5, 0.5, 0.5}))), DomainError);
  EXPECT_THROW(soft_cross_entropy(logits, tape.constant(Tensor::matrix(1, 3, {1.5, -0.5, 0.0}))), DomainError);
}

TEST(Autodiff, NllOfProbabilitiesIgnoresZeroOffLabelEntries) {
  Tape tape;
  Var p = tape.constant(Tensor::matrix(2, 3, {0.0, 1.0, 0.0, 0.25, 0.25, 0.5}));
  EXPECT_NEAR(nll_of_probabilities(p, {1, 2}).value().item(), -0.5 * std::log(0.5), 1e-15);
  EXPECT_THROW(nll_of_probabilities(p, {0, 2}), DomainError);
}

TEST(Autodiff, ReplayIsBitIdentical) {
  Rng rng(3);
  Tape tape;
  Var x = tape.parameter("x", random_tensor({5, 4}, rng));
  Var w = tape.parameter("w", random_tensor({4, 3}, rng));
  Var loss = soft_cross_entropy(relu(matmul(x, w)), tape.constant(one_hot({0, 1, 2, 0, 1}, 3)));
  (void)loss;
  EXPECT_TRUE(tape.replay_matches());
}

TEST(GradCheck, RejectsBadEpsilonAndNonFinite) {
  ParamSet p;
  p.add("x", Tensor::vector({1.0}));
  const auto fn = wrap([](Tape&, const std::vector<Var>& v) { return sum_squares(v[0]); });
  EXPECT_THROW(finite_difference_check(fn, p, 1e-9), ConfigError);
  EXPECT_THROW(finite_difference_check(fn, p, 1e-2), ConfigError);
  const ValueAndGradient nan_fn = [](const ParamSet& q) { return std::make_pair(std::nan(""), q); };
  EXPECT_THROW(finite_difference_check(nan_fn, p, 1e-6), NumericError);
}

TEST(GradCheck, DetectsAWrongGradient) {
  ParamSet p;
  p.add("x", Tensor::vector({1.0, -2.0}));
  const ValueAndGradient wrong = [](const ParamSet& q) {
    const Tensor& x = q.at("x");
    ParamSet g;
    g.add("x", Tensor::vector({2.0 * x[0], 3.0 * x[1]}));
    return std::make_pair(x[0] * x[0] + x[1] * x[1], g);
  };
  const auto r = finite_difference_check(wrong, p, 1e-6);
  EXPECT_GT(r.max_relative_error, 0.3);
  EXPECT_EQ(r.worst_index, 1u);
}
