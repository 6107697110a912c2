#include "milab/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "milab/error.hpp"
#include "testing.hpp"

namespace milab {
namespace {

using ad::GradCheckReport;
using ad::Tape;
using ad::Var;

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-6;

// Scalar loss from any tensor: weighted sum with fixed irregular weights so
// every output element gets a distinct adjoint.
Var probe(Var x) {
  Tape& t = x.tape();
  Tensor w = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
  return ad::sum(ad::mul(x, t.constant(w)));
}

GradCheckReport check_unary(std::function<Var(Var)> op, const Tensor& x) {
  return ad::grad_check([&](Var v) { return probe(op(v)); }, x, kEps, kTol);
}

GradCheckReport check_binary(std::function<Var(Var, Var)> op, const Tensor& a,
                             const Tensor& b) {
  const Tensor inputs[] = {a, b};
  return ad::grad_check(
      [&](Tape&, std::span<const Var> v) { return probe(op(v[0], v[1])); }, inputs, kEps, kTol);
}

class OpGradient : public ::testing::Test {
 protected:
  Rng rng{42};
  Tensor rand(Shape s) { return testing::random_tensor(std::move(s), rng); }
};

TEST_F(OpGradient, Matmul) {
  EXPECT_TRUE(check_binary(ad::matmul, rand({3, 4}), rand({4, 2})).passed);
}

TEST_F(OpGradient, Transpose) {
  EXPECT_TRUE(check_unary(ad::transpose, rand({3, 5})).passed);
}

TEST_F(OpGradient, ElementwiseBinary) {
  EXPECT_TRUE(check_binary(ad::add, rand({2, 3}), rand({2, 3})).passed);
  EXPECT_TRUE(check_binary(ad::sub, rand({2, 3}), rand({2, 3})).passed);
  EXPECT_TRUE(check_binary(ad::mul, rand({2, 3}), rand({2, 3})).passed);
}

TEST_F(OpGradient, ScalarBroadcast) {
  EXPECT_TRUE(check_binary(ad::mul, rand({2, 3}), rand({1})).passed);
  EXPECT_TRUE(check_binary(ad::add, rand({1}), rand({4})).passed);
  EXPECT_TRUE(check_binary(ad::sub, rand({1}), rand({4})).passed);
}

TEST_F(OpGradient, ScaleBiasRows) {
  EXPECT_TRUE(check_unary([](Var v) { return ad::scale(v, -2.5); }, rand({4})).passed);
  EXPECT_TRUE(check_binary(ad::add_bias, rand({4, 3}), rand({3})).passed);
  EXPECT_TRUE(check_binary(ad::mul_rows, rand({4, 3}), rand({4})).passed);
}

TEST_F(OpGradient, Nonlinearities) {
  Tensor x = rand({3, 4});
  // Keep relu inputs away from the kink.
  for (double& v : x.data()) v += v > 0 ? 0.1 : -0.1;
  EXPECT_TRUE(check_unary(ad::relu, x).passed);
  EXPECT_TRUE(check_unary(ad::tanh, rand({3, 4})).passed);
  EXPECT_TRUE(check_unary([](Var v) { return ad::sigmoid(v); }, rand({3, 4})).passed);
}

TEST_F(OpGradient, SoftmaxEveryAxis) {
  EXPECT_TRUE(check_unary([](Var v) { return ad::softmax(v, 0); }, rand({5})).passed);
  EXPECT_TRUE(check_unary([](Var v) { return ad::softmax(v, 0); }, rand({4, 3})).passed);
  EXPECT_TRUE(check_unary([](Var v) { return ad::softmax(v, 1); }, rand({4, 3})).passed);
}

TEST_F(OpGradient, Reductions) {
  EXPECT_TRUE(check_unary([](Var v) { return ad::sum_axis(v, 0); }, rand({4, 3})).passed);
  EXPECT_TRUE(check_unary([](Var v) { return ad::sum_axis(v, 1); }, rand({4, 3})).passed);
  EXPECT_TRUE(check_unary([](Var v) { return ad::sum_axis(v, 0); }, rand({6})).passed);
  EXPECT_TRUE(check_unary([](Var v) { return ad::reshape(v, {2, 6}); }, rand({3, 4})).passed);
}

TEST_F(OpGradient, CrossEntropy) {
  for (std::size_t label = 0; label < 4; ++label) {
    auto r = ad::grad_check([label](Var v) { return ad::cross_entropy(v, label); }, rand({4}),
                            kEps, kTol);
    EXPECT_TRUE(r.passed) << "label " << label << " rel " << r.max_rel_error;
  }
}

TEST(Autodiff, SquareHasAnalyticGradient) {
  Tape tape;
  Var x = tape.variable(Tensor::vector({1.0, -2.0, 3.5}));
  tape.backward(ad::sum(ad::mul(x, x)));
  const auto& g = tape.grad(x);
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], -4.0);
  EXPECT_DOUBLE_EQ(g[2], 7.0);
}

TEST(Autodiff, CrossEntropyGradientIsSoftmaxMinusOneHot) {
  Tape tape;
  const Tensor logits = Tensor::vector({0.2, -1.0, 2.0});
  Var x = tape.variable(logits);
  Var loss = ad::cross_entropy(x, 1);
  tape.backward(loss);
  const auto p = ad::softmax(logits.data());
  EXPECT_NEAR(loss.value()[0], -std::log(p[1]), 1e-15);
  const auto& g = tape.grad(x);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(g[c], p[c] - (c == 1 ? 1.0 : 0.0), 1e-15);
}

TEST(Autodiff, ReluSubgradientAtZeroIsZero) {
  Tape tape;
  Var x = tape.variable(Tensor::vector({0.0, 1.0, -1.0}));
  tape.backward(ad::sum(ad::relu(x)));
  EXPECT_EQ(tape.grad(x), (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(Autodiff, ReusedVariableAccumulatesBothPaths) {
  Tape tape;
  Var x = tape.variable(Tensor::vector({3.0}));
  // f = x * x + 2x, f' = 2x + 2
  Var f = ad::add(ad::mul(x, x), ad::scale(x, 2.0));
  tape.backward(f);
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 8.0);
}

TEST(Autodiff, SecondBackwardDoublesLeafGradients) {
  Tape tape;
  Var x = tape.variable(Tensor::vector({1.5, -0.5}));
  Var loss = ad::sum(ad::tanh(x));
  tape.backward(loss);
  const auto once = tape.grad(x);
  tape.backward(loss);
  const auto& twice = tape.grad(x);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(twice[i], 2.0 * once[i]);
  tape.zero_grad();
  EXPECT_EQ(tape.grad(x), (std::vector<double>{0.0, 0.0}));
}

TEST(Autodiff, WatchWritesGradientIntoSourceTensor) {
  Tensor w = Tensor::vector({2.0, 3.0});
  Tape tape;
  Var v = tape.watch(w);
  tape.backward(ad::sum(ad::mul(v, v)));
  ASSERT_TRUE(w.grad());
  EXPECT_EQ(*w.grad(), (std::vector<double>{4.0, 6.0}));
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  Tape tape;
  Var c = tape.constant(Tensor::vector({1.0}));
  Var x = tape.variable(Tensor::vector({2.0}));
  tape.backward(ad::mul(c, x));
  EXPECT_FALSE(c.requires_grad());
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 1.0);
}

TEST(Autodiff, SoftmaxRowsSumToOneAndSurviveLargeInputs) {
  Tape tape;
  Var x = tape.constant(Tensor::matrix({{1000.0, 1001.0}, {-5.0, 5.0}}));
  Var s = ad::softmax(x, 1);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_NEAR(s.value().at(r, 0) + s.value().at(r, 1), 1.0, 1e-15);
  }
  EXPECT_NEAR(s.value().at(0, 1), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Autodiff, SoftmaxOfNonFiniteInputIsNumericError) {
  Tape tape;
  Var x = tape.constant(Tensor::vector({1.0, std::numeric_limits<double>::quiet_NaN()}));
  EXPECT_THROW(ad::softmax(x, 0), NumericError);
  Var y = tape.constant(Tensor::vector({1.0, std::numeric_limits<double>::infinity()}));
  EXPECT_THROW(ad::softmax(y, 0), NumericError);
}

TEST(Autodiff, ShapeMismatchesAreDimensionErrors) {
  Tape tape;
  Var a = tape.constant(Tensor::zeros({2, 3}));
  Var b = tape.constant(Tensor::zeros({2, 3}));
  EXPECT_THROW(ad::matmul(a, b), DimensionError);
  EXPECT_THROW(ad::add(a, tape.constant(Tensor::zeros({3, 2}))), DimensionError);
  EXPECT_THROW(ad::add_bias(a, tape.constant(Tensor::zeros({2}))), DimensionError);
  EXPECT_THROW(ad::softmax(tape.constant(Tensor::zeros({3})), 1), DimensionError);
  EXPECT_THROW(ad::cross_entropy(tape.constant(Tensor::zeros({3})), 3), DimensionError);
}

TEST(Autodiff, BackwardNeedsScalarLoss) {
  Tape tape;
  Var x = tape.variable(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(tape.backward(ad::tanh(x)), DimensionError);
}

TEST(GradCheck, FlagsWrongBackwardRule) {
  // A deliberately wrong rule: claims d(x^3)/dx = x^2.
  auto bad_cube = [](Var x) {
    Tensor out = x.value();
    for (double& v : out.data()) v = v * v * v;
    return x.tape().record(out, {x}, [](const ad::BackwardContext& ctx) {
      const Tensor& in = *ctx.inputs[0];
      for (std::size_t i = 0; i < in.numel(); ++i) {
        (*ctx.in_grads[0])[i] += ctx.out_grad[i] * in[i] * in[i];
      }
    });
  };
  const auto r = ad::grad_check([&](Var v) { return ad::sum(bad_cube(v)); },
                                Tensor::vector({1.0, 2.0}), kEps, 1e-4);
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.max_rel_error, 2.0 / 3.0, 1e-6);
}

}  // namespace
}  // namespace milab
