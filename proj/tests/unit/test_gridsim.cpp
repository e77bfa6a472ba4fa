#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "postfault/error.hpp"
#include "postfault/gridsim.hpp"
#include "postfault/pool.hpp"

using namespace postfault;

namespace {

const GridModel& nominal() {
  static const GridModel m = wscc9({1.0, 0.01, 4, true});
  return m;
}

const GridModel& stressed() {
  static const GridModel m = wscc9({2.2, 0.01, 4, true});
  return m;
}

FaultScenario n1(std::size_t line, double t_f = 1.65) {
  FaultScenario s;
  s.kind = FaultKind::N1;
  s.tripped = {line};
  s.t_f = t_f;
  return s;
}

FaultScenario n2(std::size_t a, std::size_t b, double t_f = 1.7) {
  FaultScenario s;
  s.kind = FaultKind::N2;
  s.tripped = {a, b};
  s.t_f = t_f;
  return s;
}

}  // namespace

TEST(GridModel, PowerFlowReproducesTextbookOperatingPoint) {
  // Anderson & Fouad load-flow solution of the 9-bus system
  const double vm[] = {1.04, 1.025, 1.025, 1.0258, 0.9956, 1.0127, 1.0258, 1.0159, 1.0324};
  const double va_deg[] = {0.0, 9.28, 4.665, -2.217, -3.989, -3.687, 3.72, 0.728, 1.967};
  const GridModel& m = nominal();
  EXPECT_LT(m.pf_residual, 1e-8);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_NEAR(std::abs(m.v_eq[i]), vm[i], 1e-3) << "bus " << i;
    EXPECT_NEAR(std::arg(m.v_eq[i]) * 180 / M_PI, va_deg[i], 2e-2) << "bus " << i;
  }
  EXPECT_NEAR(m.p_m[0], 0.7164, 1e-3);
  EXPECT_NEAR(m.p_m[1], 1.63, 1e-9);
  EXPECT_NEAR(m.p_m[2], 0.85, 1e-9);
}

TEST(GridModel, DoubleCircuitMatchesSingleCircuitNetwork) {
  GridModel single = wscc9({1.0, 0.01, 4, false});
  EXPECT_EQ(single.trippable().size(), 6u);
  EXPECT_EQ(nominal().trippable().size(), 12u);
  EXPECT_LT((single.bus_admittance() - nominal().bus_admittance()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GridModel, AdmittanceIsSymmetric) {
  auto y = stressed().bus_admittance({2, 7});
  EXPECT_LT((y - y.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  auto ye = extended_admittance(stressed(), {});
  EXPECT_LT((ye - ye.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GridModel, HashTracksParameters) {
  EXPECT_EQ(nominal().hash(), wscc9({1.0, 0.01, 4, true}).hash());
  EXPECT_NE(nominal().hash(), stressed().hash());
}

TEST(KronReduce, IntactNetworkRecoversEquilibriumVoltages) {
  for (const GridModel* m : {&nominal(), &stressed()}) {
    ReducedNetwork r = kron_reduce(*m, {});
    Eigen::VectorXcd e(3);
    for (int i = 0; i < 3; ++i) e(i) = m->e_int[static_cast<std::size_t>(i)];
    Eigen::VectorXcd v = r.recovery * e;
    for (std::size_t b = 0; b < 9; ++b) {
      EXPECT_NEAR(std::abs(v(static_cast<Eigen::Index>(b)) - m->v_eq[b]), 0.0, 1e-8) << b;
    }
    // equilibrium: electrical power equals mechanical power
    SwingSystem sys = SwingSystem::from(*m, r);
    std::vector<double> delta;
    for (const auto& ei : m->e_int) delta.push_back(std::arg(ei));
    auto pe = sys.electrical_power(delta);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(pe[i], m->p_m[i], 1e-8);
  }
}

TEST(KronReduce, TwoBusToyMatchesHandSchurComplement) {
  GridModel m;
  m.n_bus = 2;
  const cplx z_line(0.02, 0.2);
  m.branches.push_back(Branch{0, 1, z_line, 0.0, "L", true});
  m.gens.push_back(Generator{0, 5.0, 0.0, 0.3, 0.0, 1.0});
  m.loads.push_back(Load{1, cplx(0.5, 0.1)});
  initialize(m);
  const cplx yl = m.y_load[1];
  // generator reactance, line and load in series from the internal node to ground
  const cplx expected = 1.0 / (cplx(0.0, 0.3) + z_line + 1.0 / yl);
  ReducedNetwork r = kron_reduce(m, {});
  ASSERT_EQ(r.y.rows(), 1);
  EXPECT_LT(std::abs(r.y(0, 0) - expected), 1e-12);
  // recovery: terminal voltage is the divider between reactance and the rest
  const cplx v0 = (z_line + 1.0 / yl) / (cplx(0.0, 0.3) + z_line + 1.0 / yl);
  EXPECT_LT(std::abs(r.recovery(0, 0) - v0), 1e-12);
}

TEST(KronReduce, ReductionSatisfiesFullNetworkEquations) {
  std::mt19937_64 rng(21);
  const auto trips = admissible_trips(stressed(), FaultKind::N2);
  std::uniform_int_distribution<std::size_t> pick(0, trips.size() - 1);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto& trip = trips[pick(rng)];
    ReducedNetwork r = kron_reduce(stressed(), trip);
    Eigen::MatrixXcd y = extended_admittance(stressed(), trip);
    Eigen::VectorXcd e(3);
    for (int i = 0; i < 3; ++i) e(i) = cplx(g(rng), g(rng));
    Eigen::VectorXcd full(12);
    full.head(3) = e;
    full.tail(9) = r.recovery * e;
    Eigen::VectorXcd inj = y * full;
    EXPECT_LT(inj.tail(9).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((inj.head(3) - r.y * e).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(KronReduce, DisconnectingTripRejected) {
  GridModel single = wscc9({1.0, 0.01, 4, false});
  // two edges of the single-circuit ring split it
  EXPECT_FALSE(single.connected({0, 3}));
  EXPECT_THROW(kron_reduce(single, {0, 3}), ScenarioRejected);
  EXPECT_THROW(kron_reduce(single, {99}), ScenarioRejected);
}

TEST(Simulate, NoFaultStaysAtEquilibrium) {
  FaultScenario s = n2(0, 4);
  s.t_f = 9.5;
  s.t_cl = 10.0;
  Trajectory t = simulate(stressed(), s);
  ASSERT_EQ(t.values.size(), 900u);
  const double v0 = std::abs(stressed().v_eq[4]);
  for (double v : t.values) EXPECT_NEAR(v, v0, 1e-6);
}

TEST(Simulate, PreFaultSegmentIsEquilibrium) {
  FaultScenario s = n2(1, 9, 1.537);
  Trajectory t = simulate(stressed(), s);
  const double v0 = std::abs(stressed().v_eq[stressed().monitor_bus]);
  std::size_t checked = 0;
  for (std::size_t k = 0; k < t.times.size() && t.times[k] < s.t_f; ++k, ++checked) {
    EXPECT_NEAR(t.values[k], v0, 1e-6);
  }
  EXPECT_EQ(checked, 153u);
  // the trip must move the voltage
  EXPECT_GT(std::abs(t.values[160] - v0), 1e-3);
}

TEST(Simulate, TimeGridAndBounds) {
  Trajectory t = simulate(stressed(), n1(3));
  ASSERT_EQ(t.times.size(), 900u);
  EXPECT_DOUBLE_EQ(t.times.front(), 0.01);
  EXPECT_DOUBLE_EQ(t.times.back(), 9.0);
  EXPECT_DOUBLE_EQ(t.times[199], 2.0);
  EXPECT_EQ(t.bus_id, 4u);
  for (double v : t.values) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 2.0);
  }
}

TEST(Simulate, AgreesWithFineStepIntegration) {
  FaultScenario s = n1(5, 1.6234);
  Trajectory coarse = simulate(stressed(), s, {1e-3});
  Trajectory fine = simulate(stressed(), s, {1e-4});
  double worst = 0.0;
  for (std::size_t k = 0; k < coarse.values.size(); ++k) {
    worst = std::max(worst, std::abs(coarse.values[k] - fine.values[k]));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Simulate, IsBitDeterministic) {
  FaultScenario s = n2(2, 8, 1.71);
  EXPECT_EQ(simulate(stressed(), s).values, simulate(stressed(), s).values);
}

TEST(Simulate, InvalidScenarioRejected) {
  FaultScenario s = n1(3);
  s.tripped = {12};  // a transformer
  EXPECT_THROW(simulate(stressed(), s), ConfigError);
  s = n2(3, 3);
  EXPECT_THROW(simulate(stressed(), s), ConfigError);
  s = n1(3);
  s.t_cl = s.t_f;
  EXPECT_THROW(simulate(stressed(), s), ConfigError);
}

TEST(Simulate, LossOfSynchronismRaisesWithScenario) {
  GridModel heavy = wscc9({2.2, 0.0, 4, true});
  FaultScenario s = n2(0, 1, 0.2);  // whole corridor 4-5 out for 1.8 s
  s.t_cl = 2.0;
  SimOptions tight;
  tight.max_angle = 0.05;
  try {
    simulate(heavy, s, tight);
    FAIL() << "expected divergence";
  } catch (const SimulationDiverged& e) {
    EXPECT_EQ(e.scenario(), s.describe());
  }
}

TEST(SwingSystem, LosslessUndampedEnergyIsConserved) {
  GridModel m = stressed().lossless();
  for (auto& g : m.gens) g.D = 0.0;
  for (const std::vector<std::size_t>& trip :
       {std::vector<std::size_t>{}, std::vector<std::size_t>{0, 5}}) {
    SwingSystem sys = SwingSystem::from(m, kron_reduce(m, trip));
    EXPECT_LT(sys.y.real().cwiseAbs().maxCoeff(), 1e-12);
    std::vector<double> x(6, 0.0);
    for (std::size_t i = 0; i < 3; ++i) x[i] = std::arg(m.e_int[i]) + 0.05 * static_cast<double>(i);
    const double w0 = sys.energy(x);
    double worst = 0.0;
    for (int seg = 0; seg < 30; ++seg) {
      integrate(sys, x, 0.1 * seg, 0.1 * (seg + 1), 1e-3);
      worst = std::max(worst, std::abs(sys.energy(x) - w0) / std::abs(w0));
    }
    EXPECT_LT(worst, 1e-6);
    // and the state really moved
    EXPECT_GT(std::abs(x[3]) + std::abs(x[4]) + std::abs(x[5]), 1e-3);
  }
}

TEST(SampleScenarios, TimingFollowsProtocol) {
  auto sc = sample_scenarios(stressed(), 500, FaultKind::N2, 3);
  for (const auto& s : sc) {
    EXPECT_EQ(s.t_cl, 2.0);
    EXPECT_GE(s.t_f, 1.5);
    EXPECT_LE(s.t_f, 1.8);
    EXPECT_EQ(s.tripped.size(), 2u);
    EXPECT_NE(s.tripped[0], s.tripped[1]);
    EXPECT_TRUE(stressed().connected(s.tripped));
  }
}

TEST(SampleScenarios, N1HasExactlyOneTrip) {
  for (const auto& s : sample_scenarios(stressed(), 200, FaultKind::N1, 4)) {
    EXPECT_EQ(s.kind, FaultKind::N1);
    EXPECT_EQ(s.tripped.size(), 1u);
  }
}

TEST(SampleScenarios, MeanClearingLead) {
  auto sc = sample_scenarios(stressed(), 10000, FaultKind::N1, 5);
  double mean = 0.0;
  for (const auto& s : sc) mean += s.t_cl - s.t_f;
  mean /= 10000.0;
  EXPECT_NEAR(mean, 0.35, 0.01);
}

TEST(SampleScenarios, UsesEveryAdmissibleTrip) {
  auto trips = admissible_trips(stressed(), FaultKind::N2);
  EXPECT_EQ(trips.size(), 66u);
  std::set<std::vector<std::size_t>> seen;
  for (const auto& s : sample_scenarios(stressed(), 3000, FaultKind::N2, 6)) seen.insert(s.tripped);
  EXPECT_EQ(seen.size(), 66u);
}

TEST(SampleScenarios, DeterministicAndValidated) {
  auto a = sample_scenarios(stressed(), 20, FaultKind::N1, 9);
  auto b = sample_scenarios(stressed(), 20, FaultKind::N1, 9);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(a[i].tripped, b[i].tripped);
    EXPECT_EQ(a[i].t_f, b[i].t_f);
  }
  EXPECT_THROW(sample_scenarios(stressed(), 0, FaultKind::N1, 9), ContractError);
  GridModel none = stressed();
  for (auto& br : none.branches) br.trippable = false;
  EXPECT_THROW(sample_scenarios(none, 5, FaultKind::N1, 9), ConfigError);
}

TEST(GeneratePool, AcceptedPrefixMatchesSampler) {
  PoolStats stats;
  auto pool = generate_pool(stressed(), 6, FaultKind::N1, 11, 10, &stats);
  auto sc = sample_scenarios(stressed(), 6, FaultKind::N1, 11);
  ASSERT_EQ(pool.size(), 6u);
  EXPECT_EQ(stats.accepted, 6u);
  EXPECT_EQ(stats.rejected, 0u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(pool[i].id, i);
    EXPECT_EQ(pool[i].scenario.tripped, sc[i].tripped);
  }
}

TEST(GeneratePool, RetryBudgetExhaustionRaises) {
  SimOptions tight;
  tight.max_angle = 1e-6;
  PoolStats stats;
  EXPECT_THROW(generate_pool(stressed(), 3, FaultKind::N2, 1, 4, &stats, {}, tight),
               SimulationDiverged);
  EXPECT_EQ(stats.rejected, 5u);
}

TEST(Pool, RecordsRoundTripExactly) {
  auto pool = generate_pool(stressed(), 3, FaultKind::N2, 12, 10);
  std::string text = encode_pool(pool);
  auto back = decode_pool(text);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].values, pool[i].values);
    EXPECT_EQ(back[i].times, pool[i].times);
    EXPECT_EQ(back[i].scenario.t_f, pool[i].scenario.t_f);
    EXPECT_EQ(back[i].scenario.tripped, pool[i].scenario.tripped);
  }
  EXPECT_EQ(encode_pool(back), text);
  EXPECT_THROW(decode_pool("{\"id\": 1}\n"), DataError);
  EXPECT_THROW(decode_pool("not json\n"), DataError);
}
