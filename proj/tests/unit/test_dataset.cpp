#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "postfault/dataset.hpp"
#include "postfault/error.hpp"

using namespace postfault;

namespace {

Trajectory synthetic(std::size_t id, const std::function<double(double)>& f, std::size_t n = 900,
                     FaultKind kind = FaultKind::N1) {
  Trajectory t;
  t.id = id;
  t.scenario.kind = kind;
  t.scenario.tripped = kind == FaultKind::N1 ? std::vector<std::size_t>{0}
                                             : std::vector<std::size_t>{0, 2};
  t.scenario.sample_rate = 100.0;
  t.scenario.T = static_cast<double>(n) / 100.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double time = static_cast<double>(k + 1) / 100.0;
    t.times.push_back(time);
    t.values.push_back(f(time));
  }
  return t;
}

std::vector<Trajectory> pool_of(std::size_t n, std::size_t first_id, FaultKind kind) {
  std::vector<Trajectory> pool;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 0.01 * static_cast<double>(i % 17);
    pool.push_back(synthetic(first_id + i, [a](double t) { return 0.9 + a * std::sin(3 * t); }, 900,
                             kind));
  }
  return pool;
}

}  // namespace

TEST(SplitSpec, Validation) {
  SplitSpec s;
  EXPECT_NO_THROW(s.validate());
  s.m = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.train_frac = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.Q = 0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(BuildTrain, SensorsCoincideWithTheSampleGrid) {
  // distinct value per grid point, so any interpolation would show
  Trajectory t = synthetic(0, [](double x) { return 1.0 + std::sin(37.0 * x) * 0.3; });
  SplitSpec spec;
  auto u = discretize_input(t, spec);
  ASSERT_EQ(u.size(), 200u);
  for (std::size_t i = 0; i < 200; ++i) EXPECT_EQ(u[i], t.values[i]) << i;
  auto samples = build_train({t}, spec, 1);
  EXPECT_EQ(*samples[0].u, u);
}

TEST(BuildTrain, ConstantTrajectoryGivesConstantTargets) {
  auto samples = build_train({synthetic(3, [](double) { return 1.0; })}, SplitSpec{}, 4);
  ASSERT_EQ(samples.size(), 10u);
  for (const auto& s : samples) EXPECT_EQ(s.target, 1.0);
}

TEST(BuildTrain, MidpointInterpolation) {
  Trajectory t = synthetic(0, [](double x) { return x < 3.005 ? 0.9 : 1.1; });
  // samples at 3.00 (0.9) and 3.01 (1.1)
  EXPECT_NEAR(interpolate(t, 3.005), 1.0, 1e-12);
  EXPECT_EQ(interpolate(t, 3.0), 0.9);
  EXPECT_THROW(interpolate(t, 9.5), DataError);
  EXPECT_THROW(interpolate(t, 0.001), DataError);
}

TEST(BuildTrain, QueriesLieInPostFaultDomain) {
  SplitSpec spec;
  auto samples = build_train(pool_of(50, 0, FaultKind::N1), spec, 5);
  ASSERT_EQ(samples.size(), 500u);
  for (const auto& s : samples) {
    EXPECT_GT(s.y, spec.t_cl);
    EXPECT_LE(s.y, spec.T);
    EXPECT_EQ(s.u->size(), spec.m);
  }
}

TEST(BuildTrain, SmallerQIsNestedInLarger) {
  auto pool = pool_of(8, 100, FaultKind::N2);
  SplitSpec one;
  one.Q = 1;
  SplitSpec ten;
  ten.Q = 10;
  auto a = build_train(pool, one, 77);
  auto b = build_train(pool, ten, 77);
  for (const auto& s : a) {
    auto hit = std::find_if(b.begin(), b.end(), [&](const OperatorSample& o) {
      return o.trajectory_id == s.trajectory_id && o.y == s.y && o.target == s.target;
    });
    EXPECT_NE(hit, b.end());
    EXPECT_EQ(hit->query_index, 0u);
  }
}

TEST(BuildTrain, SamplesAreReproducibleFromProvenance) {
  auto pool = pool_of(12, 40, FaultKind::N1);
  SplitSpec spec;
  auto samples = build_train(pool, spec, 9);
  for (const auto& s : samples) {
    const Trajectory& src = pool.at(s.trajectory_id - 40);
    EXPECT_EQ(query_times(s.trajectory_id, spec, 9)[s.query_index], s.y);
    EXPECT_EQ(interpolate(src, s.y), s.target);
    EXPECT_EQ(discretize_input(src, spec), *s.u);
  }
}

TEST(BuildTrain, ShuffleIsSeeded) {
  auto pool = pool_of(20, 0, FaultKind::N1);
  auto a = build_train(pool, SplitSpec{}, 3);
  auto b = build_train(pool, SplitSpec{}, 3);
  auto c = build_train(pool, SplitSpec{}, 4);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].y, b[i].y);
    EXPECT_EQ(a[i].trajectory_id, b[i].trajectory_id);
    differs = differs || a[i].y != c[i].y;
  }
  EXPECT_TRUE(differs);
  // not left in trajectory order
  std::size_t in_order = 0;
  for (std::size_t i = 1; i < a.size(); ++i) in_order += a[i].trajectory_id >= a[i - 1].trajectory_id;
  EXPECT_LT(in_order, a.size() - 10);
}

TEST(BuildTrain, ShortTrajectoryRejected) {
  auto t = synthetic(0, [](double) { return 1.0; }, 850);
  EXPECT_THROW(build_train({t}, SplitSpec{}, 1), DataError);
  EXPECT_THROW(build_test({t}, SplitSpec{}), DataError);
}

TEST(BuildTest, MeshShapeAndEndpoints) {
  SplitSpec spec;
  auto mesh = spec.test_mesh();
  ASSERT_EQ(mesh.size(), 500u);
  EXPECT_GT(mesh.front(), spec.t_cl);
  EXPECT_EQ(mesh.back(), spec.T);
  for (std::size_t j = 1; j < mesh.size(); ++j) EXPECT_NEAR(mesh[j] - mesh[j - 1], 7.0 / 500, 1e-12);
}

TEST(BuildTest, AffineTrajectoryInterpolatesExactly) {
  auto line = [](double t) { return 0.5 + 0.05 * t; };
  auto cases = build_test({synthetic(5, line, 900, FaultKind::N2)}, SplitSpec{});
  ASSERT_EQ(cases.size(), 1u);
  EXPECT_EQ(cases[0].kind, FaultKind::N2);
  ASSERT_EQ(cases[0].targets.size(), 500u);
  for (std::size_t j = 0; j < 500; ++j) {
    EXPECT_NEAR(cases[0].targets[j], line(cases[0].y_mesh[j]), 1e-12);
  }
}

TEST(SplitPools, FullSizes) {
  auto split = split_pools(pool_of(1000, 0, FaultKind::N1), pool_of(1000, 1000, FaultKind::N2), 0.7, 1);
  EXPECT_EQ(split.train.size(), 1400u);
  EXPECT_EQ(split.test.size(), 600u);
}

TEST(SplitPools, NoOverlapAndMixedKinds) {
  auto split = split_pools(pool_of(30, 0, FaultKind::N1), pool_of(30, 30, FaultKind::N2), 0.7, 2);
  std::set<std::size_t> train_ids;
  for (const auto& t : split.train) train_ids.insert(t.id);
  for (const auto& t : split.test) EXPECT_EQ(train_ids.count(t.id), 0u);
  EXPECT_EQ(train_ids.size() + split.test.size(), 60u);
  std::size_t n2_in_test = 0;
  for (const auto& t : split.test) n2_in_test += t.scenario.kind == FaultKind::N2;
  EXPECT_GT(n2_in_test, 0u);
  EXPECT_LT(n2_in_test, split.test.size());
}

TEST(SplitPools, SameSeedSameMembership) {
  auto a = split_pools(pool_of(20, 0, FaultKind::N1), pool_of(20, 20, FaultKind::N2), 0.7, 5);
  auto b = split_pools(pool_of(20, 0, FaultKind::N1), pool_of(20, 20, FaultKind::N2), 0.7, 5);
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test[i].id, b.test[i].id);
}

TEST(SplitPools, DegenerateSplitsRejected) {
  auto n1 = pool_of(2, 0, FaultKind::N1);
  auto n2 = pool_of(2, 2, FaultKind::N2);
  EXPECT_THROW(split_pools(n1, n2, 1.0, 1), ContractError);
  EXPECT_THROW(split_pools(n1, n2, 0.1, 1), ContractError);
  EXPECT_THROW(split_pools({}, n2, 0.5, 1), ContractError);
  EXPECT_THROW(split_pools(n1, pool_of(2, 1, FaultKind::N2), 0.5, 1), DataError);
}

TEST(InputNoise, ZeroSigmaIsIdentity) {
  std::vector<double> u{0.9, 1.0, 1.1};
  EXPECT_EQ(add_input_noise(u, 0.0, 1), u);
  EXPECT_THROW(add_input_noise(u, -0.1, 1), ContractError);
}

TEST(InputNoise, MomentsAndIndependence) {
  std::vector<double> u(100000, 0.0);
  auto e = add_input_noise(u, 0.01, 42, 7);
  double mean = 0.0;
  for (double v : e) mean += v;
  mean /= static_cast<double>(e.size());
  double var = 0.0, lag = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    var += (e[i] - mean) * (e[i] - mean);
    if (i + 1 < e.size()) lag += (e[i] - mean) * (e[i + 1] - mean);
  }
  const double sd = std::sqrt(var / static_cast<double>(e.size() - 1));
  EXPECT_GE(sd, 0.0099);
  EXPECT_LE(sd, 0.0101);
  EXPECT_LT(std::abs(lag / var), 0.02);
}

TEST(InputNoise, SubstreamsAreReproducibleAndDistinct) {
  std::vector<double> u(50, 1.0);
  EXPECT_EQ(add_input_noise(u, 0.01, 3, 10), add_input_noise(u, 0.01, 3, 10));
  EXPECT_NE(add_input_noise(u, 0.01, 3, 10), add_input_noise(u, 0.01, 3, 11));
}

TEST(Collate, StacksSamples) {
  auto samples = build_train(pool_of(3, 0, FaultKind::N1), SplitSpec{}, 1);
  std::vector<std::size_t> idx{4, 0, 7};
  Batch b = collate(samples, idx);
  EXPECT_EQ(b.u.shape(), (Shape{3, 200}));
  EXPECT_EQ(b.y[0], samples[4].y);
  EXPECT_EQ(b.target[2], samples[7].target);
  EXPECT_EQ(b.u(1, 5), (*samples[0].u)[5]);
}
