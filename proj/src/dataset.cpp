#include "postfault/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "postfault/error.hpp"
#include "postfault/random.hpp"

namespace postfault {

namespace {

void require_coverage(const Trajectory& tr, double T) {
  const double rate = tr.scenario.sample_rate;
  const auto needed = static_cast<std::size_t>(std::llround(T * rate));
  if (tr.values.size() < needed) {
    throw DataError("trajectory " + std::to_string(tr.id) + " has " +
                    std::to_string(tr.values.size()) + " samples, needs " +
                    std::to_string(needed) + " to cover T=" + std::to_string(T));
  }
}

}  // namespace

void SplitSpec::validate() const {
  if (m < 2) throw ConfigError("need m >= 2 sensors");
  if (Q < 1) throw ConfigError("need Q >= 1 queries per trajectory");
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train_frac must be in (0, 1)");
  if (!(t_cl > 0.0 && T > t_cl)) throw ConfigError("need 0 < t_cl < T");
  if (mesh_points < 1) throw ConfigError("mesh needs at least one point");
}

std::vector<double> SplitSpec::sensor_times() const {
  std::vector<double> x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = static_cast<double>(i + 1) * t_cl / static_cast<double>(m);
  return x;
}

std::vector<double> SplitSpec::test_mesh() const {
  std::vector<double> y(mesh_points);
  const double n = static_cast<double>(mesh_points);
  for (std::size_t j = 0; j < mesh_points; ++j) {
    y[j] = t_cl + (T - t_cl) * static_cast<double>(j + 1) / n;
  }
  y.back() = T;
  return y;
}

double interpolate(const Trajectory& tr, double t) {
  const double rate = tr.scenario.sample_rate;
  const std::size_t n = tr.values.size();
  if (n == 0) throw DataError("empty trajectory");
  // sample k sits at (k + 1) / rate
  const double pos = t * rate - 1.0;
  const double nearest = std::round(pos);
  if (std::abs(pos - nearest) < 1e-9) {
    if (nearest < 0.0 || nearest > static_cast<double>(n - 1)) {
      throw DataError("time " + std::to_string(t) + " outside trajectory");
    }
    return tr.values[static_cast<std::size_t>(nearest)];
  }
  if (pos < 0.0 || pos > static_cast<double>(n - 1)) {
    throw DataError("time " + std::to_string(t) + " outside trajectory");
  }
  const auto k = static_cast<std::size_t>(std::floor(pos));
  const double w = pos - static_cast<double>(k);
  return (1.0 - w) * tr.values[k] + w * tr.values[k + 1];
}

std::vector<double> discretize_input(const Trajectory& tr, const SplitSpec& spec) {
  std::vector<double> u;
  u.reserve(spec.m);
  for (double x : spec.sensor_times()) u.push_back(interpolate(tr, x));
  return u;
}

std::vector<double> query_times(std::size_t trajectory_id, const SplitSpec& spec,
                                std::uint64_t seed) {
  Rng rng = make_rng(seed, "queries", trajectory_id);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> y(spec.Q);
  // T - U (T - t_cl) with U in [0, 1) lands in (t_cl, T]
  for (double& v : y) v = spec.T - unit(rng) * (spec.T - spec.t_cl);
  return y;
}

std::vector<OperatorSample> build_train(const std::vector<Trajectory>& pool, const SplitSpec& spec,
                                        std::uint64_t seed) {
  spec.validate();
  std::vector<OperatorSample> out;
  out.reserve(pool.size() * spec.Q);
  for (const auto& tr : pool) {
    require_coverage(tr, spec.T);
    auto u = std::make_shared<const std::vector<double>>(discretize_input(tr, spec));
    const auto ys = query_times(tr.id, spec, seed);
    for (std::size_t q = 0; q < ys.size(); ++q) {
      out.push_back(OperatorSample{tr.id, q, u, ys[q], interpolate(tr, ys[q])});
    }
  }
  Rng rng = make_rng(seed, "train-shuffle");
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<TestCase> build_test(const std::vector<Trajectory>& pool, const SplitSpec& spec) {
  spec.validate();
  const auto mesh = spec.test_mesh();
  std::vector<TestCase> out;
  out.reserve(pool.size());
  for (const auto& tr : pool) {
    require_coverage(tr, spec.T);
    TestCase tc;
    tc.trajectory_id = tr.id;
    tc.kind = tr.scenario.kind;
    tc.u = discretize_input(tr, spec);
    tc.y_mesh = mesh;
    tc.targets.reserve(mesh.size());
    for (double y : mesh) tc.targets.push_back(interpolate(tr, y));
    out.push_back(std::move(tc));
  }
  return out;
}

PoolSplit split_pools(const std::vector<Trajectory>& n1_pool, const std::vector<Trajectory>& n2_pool,
                      double train_frac, std::uint64_t seed) {
  if (n1_pool.empty() || n2_pool.empty()) throw ContractError("both pools must be non-empty");
  std::vector<Trajectory> all = n1_pool;
  all.insert(all.end(), n2_pool.begin(), n2_pool.end());
  std::set<std::size_t> ids;
  for (const auto& t : all) {
    if (!ids.insert(t.id).second) throw DataError("duplicate trajectory id " + std::to_string(t.id));
  }
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(all.size())));
  if (n_train == 0 || n_train >= all.size()) {
    throw ContractError("train fraction leaves an empty train or test split");
  }
  Rng rng = make_rng(seed, "pool-split");
  std::shuffle(all.begin(), all.end(), rng);
  PoolSplit out;
  out.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
  return out;
}

std::vector<double> add_input_noise(std::span<const double> u, double sigma, std::uint64_t seed,
                                    std::uint64_t counter) {
  if (!(sigma >= 0.0)) throw ContractError("noise sigma must be >= 0");
  std::vector<double> out(u.begin(), u.end());
  if (sigma == 0.0) return out;
  Rng rng = make_rng(seed, "input-noise", counter);
  std::normal_distribution<double> eps(0.0, sigma);
  for (double& v : out) v += eps(rng);
  return out;
}

Batch collate(const std::vector<OperatorSample>& samples, std::span<const std::size_t> idx) {
  if (idx.empty()) throw ContractError("empty batch");
  const std::size_t m = samples.at(idx[0]).u->size();
  Batch b{Tensor({idx.size(), m}), Tensor({idx.size(), 1}), Tensor({idx.size(), 1})};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const OperatorSample& s = samples.at(idx[r]);
    if (s.u->size() != m) throw DimensionError("samples disagree on the number of sensors");
    std::copy(s.u->begin(), s.u->end(), b.u.data().begin() + static_cast<std::ptrdiff_t>(r * m));
    b.y[r] = s.y;
    b.target[r] = s.target;
  }
  return b;
}

Batch collate(const std::vector<OperatorSample>& samples) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return collate(samples, idx);
}

}  // namespace postfault
