#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "postfault/error.hpp"
#include "postfault/tensor.hpp"

using namespace postfault;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.data()) v = d(rng);
  return t;
}

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

double eval_loss(const std::vector<Tensor>& inputs, const Builder& build) {
  Tape tape;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    vars.push_back(tape.leaf("x" + std::to_string(i), inputs[i]));
  }
  return build(tape, vars).value().item();
}

// Central differences against the tape for every component of every input.
void check_gradients(const std::vector<Tensor>& inputs, const Builder& build) {
  Tape tape;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    vars.push_back(tape.leaf("x" + std::to_string(i), inputs[i]));
  }
  Gradients g = tape.backward(build(tape, vars));

  const double h = 1e-6;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& grad = g.at("x" + std::to_string(i));
    ASSERT_EQ(grad.shape(), inputs[i].shape());
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      auto plus = inputs, minus = inputs;
      plus[i][j] += h;
      minus[i][j] -= h;
      const double fd = (eval_loss(plus, build) - eval_loss(minus, build)) / (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(grad[j]), 1e-3});
      EXPECT_LT(std::abs(fd - grad[j]) / scale, 1e-4)
          << "input " << i << " component " << j << ": fd " << fd << " vs " << grad[j];
    }
  }
}

// Weighted sum so every output component carries a distinct weight.
Var weighted(Tape& tape, Var x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(x * tape.constant(random_tensor(x.value().shape(), rng)));
}

double taylor_sin(double x) {
  double term = x, acc = 0.0;
  for (int n = 1; n < 40; ++n) {
    acc += term;
    term *= -x * x / ((2.0 * n) * (2.0 * n + 1.0));
  }
  return acc;
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(Tensor({0, 3}), DimensionError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(Matmul, IdentityTimesColumn) {
  Tensor out = matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(out, Tensor::matrix({{3}, {4}}));
}

TEST(Matmul, RowTimesColumn) {
  Tensor out = matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(out[0], 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(11);
  Tensor a = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5, 3}, rng);
  Tensor out = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(out(i, j), s, 1e-12);
    }
  }
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
  Tape tape;
  EXPECT_THROW(matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({4, 1}))),
               DimensionError);
}

TEST(Elementwise, BasicValues) {
  Tape tape;
  Var zero = tape.constant(Tensor::scalar(0.0));
  EXPECT_EQ(sin(zero).value().item(), 0.0);
  EXPECT_EQ(exp(zero).value().item(), 1.0);
}

TEST(Elementwise, SinAgreesWithSeries) {
  std::mt19937_64 rng(3);
  Tape tape;
  Tensor x = random_tensor({100, 1}, rng, -std::numbers::pi, std::numbers::pi);
  Tensor s = sin(tape.constant(x)).value();
  for (std::size_t i = 0; i < 100; ++i) EXPECT_NEAR(s[i], taylor_sin(x[i]), 1e-12);
}

TEST(Elementwise, DomainViolationsRaise) {
  Tape tape;
  EXPECT_THROW(log(tape.constant(Tensor::scalar(-1.0))), NumericError);
  EXPECT_THROW(log(tape.constant(Tensor::scalar(0.0))), NumericError);
  EXPECT_THROW(exp(tape.constant(Tensor::scalar(1000.0))), NumericError);
}

TEST(Elementwise, OnlyScalarOrEqualShapesBroadcast) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}, 1.0));
  Var row = tape.constant(Tensor({1, 3}, 1.0));
  Var s = tape.constant(Tensor::scalar(2.0));
  EXPECT_THROW(a + row, DimensionError);
  EXPECT_EQ((a * s).value(), Tensor({2, 3}, 2.0));
  EXPECT_EQ((s - a).value(), Tensor({2, 3}, 1.0));
}

TEST(Elementwise, DispatcherChecksArity) {
  Tape tape;
  Var a = tape.constant(Tensor::scalar(1.0));
  Var two[] = {a, a};
  EXPECT_THROW(elementwise(ElementwiseOp::sin, two), ContractError);
  EXPECT_THROW(elementwise(ElementwiseOp::add, std::span<const Var>(&a, 1)), ContractError);
}

TEST(Backward, SquareAtThree) {
  Tape tape;
  Var x = tape.leaf("x", Tensor::scalar(3.0));
  EXPECT_DOUBLE_EQ(tape.backward(square(x)).at("x").item(), 6.0);
}

TEST(Backward, SinAtZero) {
  Tape tape;
  Var x = tape.leaf("x", Tensor::scalar(0.0));
  EXPECT_DOUBLE_EQ(tape.backward(sin(x)).at("x").item(), 1.0);
}

TEST(Backward, NonScalarLossRejected) {
  Tape tape;
  Var x = tape.leaf("x", Tensor({2, 1}, 1.0));
  EXPECT_THROW(tape.backward(square(x)), ContractError);
}

TEST(Backward, UntouchedLeafGetsZeros) {
  Tape tape;
  Var x = tape.leaf("x", Tensor::scalar(2.0));
  tape.leaf("unused", Tensor({2, 2}, 5.0));
  Gradients g = tape.backward(square(x));
  EXPECT_EQ(g.at("unused"), Tensor({2, 2}, 0.0));
}

TEST(Backward, DuplicateLeafNamesRejected) {
  Tape tape;
  tape.leaf("w", Tensor::scalar(1.0));
  EXPECT_THROW(tape.leaf("w", Tensor::scalar(1.0)), ContractError);
}

TEST(Backward, ReusedNodeAccumulates) {
  Tape tape;
  Var x = tape.leaf("x", Tensor::scalar(1.5));
  Var y = x * x + x;  // dy/dx = 2x + 1
  EXPECT_DOUBLE_EQ(tape.backward(y).at("x").item(), 4.0);
}

class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(1000 + GetParam());
  const std::uint64_t w = 77 + GetParam();
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor k = random_tensor({4, 2}, rng);
  Tensor bias = random_tensor({1, 4}, rng);
  Tensor s = random_tensor({1}, rng);
  Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0);

  check_gradients({a, k}, [&](Tape& t, auto& v) { return weighted(t, matmul(v[0], v[1]), w); });
  check_gradients({a, b}, [&](Tape& t, auto& v) { return weighted(t, v[0] + v[1], w); });
  check_gradients({a, b}, [&](Tape& t, auto& v) { return weighted(t, v[0] - v[1], w); });
  check_gradients({a, b}, [&](Tape& t, auto& v) { return weighted(t, v[0] * v[1], w); });
  check_gradients({a, s}, [&](Tape& t, auto& v) { return weighted(t, v[0] * v[1], w); });
  check_gradients({s, a}, [&](Tape& t, auto& v) { return weighted(t, v[0] - v[1], w); });
  check_gradients({a}, [&](Tape& t, auto& v) { return weighted(t, sin(v[0]), w); });
  check_gradients({a}, [&](Tape& t, auto& v) { return weighted(t, exp(v[0]), w); });
  check_gradients({pos}, [&](Tape& t, auto& v) { return weighted(t, log(v[0]), w); });
  check_gradients({a}, [&](Tape& t, auto& v) { return weighted(t, square(v[0]), w); });
  check_gradients({a, bias}, [&](Tape& t, auto& v) { return weighted(t, add_row(v[0], v[1]), w); });
  check_gradients({a}, [&](Tape& t, auto& v) { return weighted(t, row_sum(v[0]), w); });
  check_gradients({a}, [&](Tape&, auto& v) { return sum(v[0]); });
  check_gradients({a}, [&](Tape&, auto& v) { return mean(square(v[0])); });
  check_gradients({a}, [&](Tape& t, auto& v) { return weighted(t, scale(v[0], -2.5), w); });
  check_gradients({a}, [&](Tape& t, auto& v) { return weighted(t, shift(v[0], 0.3), w); });
  // interior points only: the clamp kink is not differentiable
  check_gradients({a}, [&](Tape& t, auto& v) { return weighted(t, clamp(v[0], -5.0, 5.0), w); });
}

INSTANTIATE_TEST_SUITE_P(RandomDraws, PrimitiveGradients, ::testing::Range(0, 5));

TEST(Backward, ClampBlocksGradientOutsideBounds) {
  Tape tape;
  Var x = tape.leaf("x", Tensor::matrix({{-20.0, 0.0, 20.0}}));
  Gradients g = tape.backward(sum(clamp(x, -10.0, 3.0)));
  EXPECT_EQ(g.at("x"), Tensor::matrix({{0.0, 1.0, 0.0}}));
}

TEST(Backward, IsLinearInTheLoss) {
  std::mt19937_64 rng(5);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor k = random_tensor({3, 3}, rng);
  auto f1 = [](Var x, Var y) { return sum(sin(matmul(x, y))); };
  auto f2 = [](Var x, Var y) { return mean(square(x * y)); };

  auto grads = [&](int which) {
    Tape tape;
    Var x = tape.leaf("a", a);
    Var y = tape.leaf("k", k);
    Var loss = which == 1 ? f1(x, y) : which == 2 ? f2(x, y) : f1(x, y) + f2(x, y);
    return tape.backward(loss);
  };
  Gradients g1 = grads(1), g2 = grads(2), g12 = grads(3);
  for (const char* name : {"a", "k"}) {
    for (std::size_t i = 0; i < 9; ++i) {
      EXPECT_NEAR(g12.at(name)[i], g1.at(name)[i] + g2.at(name)[i], 1e-13);
    }
  }
}

TEST(Tape, ForwardIsBitDeterministic) {
  std::mt19937_64 rng(9);
  Tensor a = random_tensor({8, 6}, rng);
  Tensor k = random_tensor({6, 5}, rng);
  auto run = [&] {
    Tape tape;
    return exp(sin(matmul(tape.constant(a), tape.constant(k)))).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Tape, ConstantsAreNotTracked) {
  Tape tape;
  Var c = tape.constant(Tensor::scalar(1.0));
  Var x = tape.leaf("x", Tensor::scalar(1.0));
  EXPECT_FALSE(c.tracked());
  EXPECT_FALSE(sin(c).tracked());
  EXPECT_TRUE((c * x).tracked());
}
