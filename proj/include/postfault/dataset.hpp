#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "postfault/gridsim.hpp"
#include "postfault/tensor.hpp"

namespace postfault {

struct SplitSpec {
  double t_cl = 2.0;
  double T = 9.0;
  std::size_t m = 200;  // sensors on [0, t_cl]
  std::size_t Q = 10;   // queries per training trajectory
  double train_frac = 0.7;
  std::size_t mesh_points = 500;

  void validate() const;
  /// x_i = i * t_cl / m for i = 1..m
  std::vector<double> sensor_times() const;
  /// t_cl + (T - t_cl) * j / n for j = 1..n
  std::vector<double> test_mesh() const;
};

struct OperatorSample {
  std::size_t trajectory_id = 0;
  std::size_t query_index = 0;
  std::shared_ptr<const std::vector<double>> u;
  double y = 0.0;
  double target = 0.0;
};

struct TestCase {
  std::size_t trajectory_id = 0;
  FaultKind kind = FaultKind::N1;
  std::vector<double> u;
  std::vector<double> y_mesh;
  std::vector<double> targets;
};

/// Linear interpolation on the trajectory's sample grid; exact at grid points.
double interpolate(const Trajectory& tr, double t);

/// Input function sampled at the sensors.
std::vector<double> discretize_input(const Trajectory& tr, const SplitSpec& spec);

/// The Q query times drawn for one trajectory. Draws come from one stream per
/// trajectory, so a smaller Q yields a prefix of a larger one.
std::vector<double> query_times(std::size_t trajectory_id, const SplitSpec& spec,
                                std::uint64_t seed);

std::vector<OperatorSample> build_train(const std::vector<Trajectory>& pool, const SplitSpec& spec,
                                        std::uint64_t seed);
std::vector<TestCase> build_test(const std::vector<Trajectory>& pool, const SplitSpec& spec);

struct PoolSplit {
  std::vector<Trajectory> train;
  std::vector<Trajectory> test;
};
PoolSplit split_pools(const std::vector<Trajectory>& n1_pool, const std::vector<Trajectory>& n2_pool,
                      double train_frac, std::uint64_t seed);

/// u + eps with eps_i ~ N(0, sigma^2) i.i.d.; `counter` selects the substream (e.g. trajectory id).
std::vector<double> add_input_noise(std::span<const double> u, double sigma, std::uint64_t seed,
                                    std::uint64_t counter = 0);

struct Batch {
  Tensor u;       // n x m
  Tensor y;       // n x 1
  Tensor target;  // n x 1
};
Batch collate(const std::vector<OperatorSample>& samples, std::span<const std::size_t> indices);
Batch collate(const std::vector<OperatorSample>& samples);

}  // namespace postfault
