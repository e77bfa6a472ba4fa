#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "postfault/error.hpp"
#include "postfault/net.hpp"

using namespace postfault;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(-scale, scale);
  for (double& v : t.data()) v = d(rng);
  return t;
}

ModifiedMlpParams randomized(const ModifiedMlpConfig& cfg, std::uint64_t seed) {
  // Glorot weights plus nonzero biases so every term of the recurrence matters.
  ModifiedMlpParams p = glorot_init(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x5a5a);
  p.u_b = random_tensor(p.u_b.shape(), rng, 0.5);
  p.v_b = random_tensor(p.v_b.shape(), rng, 0.5);
  for (auto& b : p.z_b) b = random_tensor(b.shape(), rng, 0.5);
  p.out_b = random_tensor(p.out_b.shape(), rng, 0.5);
  return p;
}

// Plain loops over the gated recurrence, written without the tape.
std::vector<double> reference_forward(const ModifiedMlpParams& p, const std::vector<double>& x) {
  const auto& c = p.config;
  auto layer = [](const std::vector<double>& in, const Tensor& w, const Tensor& b) {
    std::vector<double> out(w.shape()[1]);
    for (std::size_t j = 0; j < out.size(); ++j) {
      double s = b[j];
      for (std::size_t i = 0; i < in.size(); ++i) s += in[i] * w(i, j);
      out[j] = s;
    }
    return out;
  };
  auto act = [](std::vector<double> v) {
    for (double& e : v) e = std::sin(e);
    return v;
  };
  auto u = act(layer(x, p.u_w, p.u_b));
  auto v = act(layer(x, p.v_w, p.v_b));
  auto h = act(layer(x, p.z_w[0], p.z_b[0]));
  for (std::size_t k = 1; k <= c.depth; ++k) {
    auto z = act(layer(h, p.z_w[k], p.z_b[k]));
    for (std::size_t j = 0; j < c.width; ++j) h[j] = (1.0 - z[j]) * u[j] + z[j] * v[j];
  }
  return layer(h, p.out_w, p.out_b);
}

}  // namespace

TEST(Glorot, WeightsWithinUnitBoundForThreeByThree) {
  ModifiedMlpConfig cfg{3, 3, 2, 3};
  ModifiedMlpParams p = glorot_init(cfg, 1);
  for (const Tensor* w : {&p.u_w, &p.v_w, &p.z_w[0], &p.z_w[1], &p.z_w[2], &p.out_w}) {
    for (double v : w->data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Glorot, BiasesAreZero) {
  ModifiedMlpParams p = glorot_init({4, 6, 2, 5}, 3);
  for (const Tensor* b : {&p.u_b, &p.v_b, &p.z_b[0], &p.z_b[1], &p.z_b[2], &p.out_b}) {
    for (double v : b->data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Glorot, SameSeedIsBitIdentical) {
  ModifiedMlpConfig cfg{5, 7, 3, 4};
  EXPECT_EQ(glorot_init(cfg, 42), glorot_init(cfg, 42));
  EXPECT_NE(glorot_init(cfg, 42).u_w, glorot_init(cfg, 43).u_w);
}

TEST(Glorot, VarianceMatchesUniformMoment) {
  Tensor w = glorot_uniform(100, 100, 2024);
  double mean = 0.0;
  for (double v : w.data()) mean += v;
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.size() - 1);
  // Uniform(-a, a) has variance a^2/3 = 2/(fan_in + fan_out)
  const double expected = 2.0 / 200.0;
  EXPECT_NEAR(var, expected, 0.05 * expected);
}

TEST(Glorot, RejectsZeroDimensions) {
  EXPECT_THROW(glorot_init({0, 3, 1, 1}, 1), ConfigError);
  EXPECT_THROW(glorot_init({1, 3, 0, 1}, 1), ConfigError);
}

TEST(ModifiedMlp, ZeroNetworkOutputsZero) {
  ModifiedMlpConfig cfg{3, 4, 2, 2};
  ModifiedMlpParams p = glorot_init(cfg, 1);
  for (Tensor* w : {&p.u_w, &p.v_w, &p.out_w}) *w = Tensor(w->shape(), 0.0);
  for (auto& w : p.z_w) w = Tensor(w.shape(), 0.0);
  std::mt19937_64 rng(2);
  Tensor out = forward(p, random_tensor({5, 3}, rng));
  EXPECT_EQ(out, Tensor({5, 2}, 0.0));
}

TEST(ModifiedMlp, HandTraceOneDimensional) {
  ModifiedMlpParams p = glorot_init({1, 1, 1, 1}, 1);
  p.u_w = Tensor::matrix({{0.5}});
  p.u_b = Tensor::matrix({{0.1}});
  p.v_w = Tensor::matrix({{-0.3}});
  p.v_b = Tensor::matrix({{0.2}});
  p.z_w[0] = Tensor::matrix({{0.7}});
  p.z_b[0] = Tensor::matrix({{-0.1}});
  p.z_w[1] = Tensor::matrix({{1.2}});
  p.z_b[1] = Tensor::matrix({{0.05}});
  p.out_w = Tensor::matrix({{2.0}});
  p.out_b = Tensor::matrix({{-0.4}});

  const double x = 0.8;
  const double u = std::sin(0.5 * x + 0.1);   // sin(0.5)
  const double v = std::sin(-0.3 * x + 0.2);  // sin(-0.04)
  const double h1 = std::sin(0.7 * x - 0.1);  // sin(0.46)
  const double z1 = std::sin(1.2 * h1 + 0.05);
  const double h2 = (1 - z1) * u + z1 * v;
  const double expected = 2.0 * h2 - 0.4;

  Tensor out = forward(p, Tensor::matrix({{x}}));
  EXPECT_NEAR(out.item(), expected, 1e-15);
  EXPECT_NEAR(u, 0.479425538604203, 1e-15);
}

TEST(ModifiedMlp, MatchesLoopImplementation) {
  ModifiedMlpConfig cfg{6, 9, 3, 4};
  ModifiedMlpParams p = randomized(cfg, 17);
  std::mt19937_64 rng(8);
  Tensor x = random_tensor({5, 6}, rng);
  Tensor out = forward(p, x);
  for (std::size_t r = 0; r < 5; ++r) {
    std::vector<double> row(x.data().begin() + r * 6, x.data().begin() + (r + 1) * 6);
    auto ref = reference_forward(p, row);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out(r, j), ref[j], 1e-12);
  }
}

TEST(ModifiedMlp, WrongInputWidthThrows) {
  ModifiedMlpParams p = glorot_init({3, 4, 1, 2}, 1);
  EXPECT_THROW(forward(p, Tensor({2, 4})), DimensionError);
}

TEST(ModifiedMlp, RowPermutationEquivariant) {
  ModifiedMlpConfig cfg{4, 8, 2, 3};
  ModifiedMlpParams p = randomized(cfg, 5);
  std::mt19937_64 rng(6);
  Tensor x = random_tensor({6, 4}, rng);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  Tensor xp({6, 4});
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 4; ++c) xp(r, c) = x(perm[r], c);
  }
  Tensor out = forward(p, x);
  Tensor outp = forward(p, xp);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(outp(r, c), out(perm[r], c));
  }
}

TEST(ModifiedMlp, ForwardTwiceIsBitIdentical) {
  ModifiedMlpParams p = randomized({4, 8, 3, 3}, 5);
  std::mt19937_64 rng(6);
  Tensor x = random_tensor({6, 4}, rng);
  EXPECT_EQ(forward(p, x), forward(p, x));
}

TEST(ModifiedMlp, GateOfOnesSelectsV) {
  ModifiedMlpConfig cfg{3, 5, 2, 2};
  ModifiedMlpParams p = randomized(cfg, 9);
  // last gate: zero weights, bias pi/2 so Z = sin(pi/2) = 1 exactly
  p.z_w.back() = Tensor(p.z_w.back().shape(), 0.0);
  p.z_b.back() = Tensor(p.z_b.back().shape(), std::numbers::pi / 2);
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor base = forward(p, x);

  ModifiedMlpParams pu = p;
  pu.u_w = random_tensor(p.u_w.shape(), rng);
  pu.u_b = random_tensor(p.u_b.shape(), rng);
  EXPECT_EQ(forward(pu, x), base);

  ModifiedMlpParams pv = p;
  pv.v_b = random_tensor(p.v_b.shape(), rng);
  EXPECT_NE(forward(pv, x), base);
}

TEST(ModifiedMlp, GateOfZerosSelectsU) {
  ModifiedMlpConfig cfg{3, 5, 2, 2};
  ModifiedMlpParams p = randomized(cfg, 10);
  p.z_w.back() = Tensor(p.z_w.back().shape(), 0.0);
  p.z_b.back() = Tensor(p.z_b.back().shape(), 0.0);
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor base = forward(p, x);

  ModifiedMlpParams pv = p;
  pv.v_w = random_tensor(p.v_w.shape(), rng);
  pv.v_b = random_tensor(p.v_b.shape(), rng);
  EXPECT_EQ(forward(pv, x), base);

  ModifiedMlpParams pu = p;
  pu.u_b = random_tensor(p.u_b.shape(), rng);
  EXPECT_NE(forward(pu, x), base);
}

TEST(ModifiedMlp, GradientsMatchFiniteDifferences) {
  ModifiedMlpConfig cfg{3, 4, 2, 2};
  ModifiedMlpParams p = randomized(cfg, 12);
  std::mt19937_64 rng(13);
  Tensor x = random_tensor({5, 3}, rng);
  Tensor target = random_tensor({5, 2}, rng);

  auto loss_of = [&](const ParameterVector& pv, Gradients* grads) {
    Tape tape;
    MlpVars v = bind(tape, ModifiedMlpParams::read_from(pv, cfg, "net"), "net", true);
    Var l = mean(square(forward(v, tape.constant(x)) - tape.constant(target)));
    if (grads) *grads = tape.backward(l);
    return l.value().item();
  };

  ParameterVector pv;
  p.append_to(pv, "net");
  Gradients g;
  loss_of(pv, &g);
  std::vector<double> flat = pv.flatten(g);
  const double h = 1e-6;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    auto plus = pv, minus = pv;
    plus.values()[i] += h;
    minus.values()[i] -= h;
    const double fd = (loss_of(plus, nullptr) - loss_of(minus, nullptr)) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(flat[i]), 1e-3});
    EXPECT_LT(std::abs(fd - flat[i]) / scale, 1e-4) << "parameter component " << i;
  }
}

TEST(ModifiedMlp, ParameterVectorRoundTrip) {
  ModifiedMlpConfig cfg{3, 4, 2, 2};
  ModifiedMlpParams p = randomized(cfg, 12);
  ParameterVector pv;
  p.append_to(pv, "trunk");
  EXPECT_EQ(pv.slots().front().name, "trunk.u.w");
  EXPECT_TRUE(pv.contains("trunk.z2.b"));
  EXPECT_FALSE(pv.contains("trunk.z3.b"));
  EXPECT_EQ(ModifiedMlpParams::read_from(pv, cfg, "trunk"), p);
  EXPECT_THROW(ModifiedMlpParams::read_from(pv, {3, 5, 2, 2}, "trunk"), DimensionError);
}
