#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "postfault/checkpoint.hpp"
#include "postfault/config.hpp"
#include "postfault/dataset.hpp"
#include "postfault/deeponet.hpp"
#include "postfault/gridsim.hpp"
#include "postfault/sghmc.hpp"
#include "postfault/train.hpp"
#include "postfault/uqeval.hpp"

namespace postfault {

// Typed views of a RunConfig. Each validates what it returns.
GridModel grid_model(const RunConfig& cfg);
SimOptions sim_options(const RunConfig& cfg);
ScenarioOptions scenario_options(const RunConfig& cfg);
SplitSpec split_spec(const RunConfig& cfg);
DeepOnetConfig net_config(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);
BayesConfig bayes_config(const RunConfig& cfg);

struct EvalConfig {
  double level = 0.95;
  std::size_t n_test = 100;
  std::uint64_t seed = 7;
  double noise = 0.0;
  std::uint64_t noise_seed = 11;
  double y_star = 2.2;
  UnderVoltageProfile profile;
  std::size_t bands = 5;
  double chi_max = 3.0;
  std::size_t chi_points = 61;
  std::size_t residual_epochs = 200;

  std::vector<double> chis() const;
};
EvalConfig eval_config(const RunConfig& cfg);

struct Pools {
  std::vector<Trajectory> n1, n2;
  PoolStats n1_stats, n2_stats;
};
/// N-1 pool gets ids [0, n1), the N-2 pool [n1, n1 + n2).
Pools simulate_pools(const RunConfig& cfg);

struct DatasetBundle {
  std::vector<Trajectory> train_pool, test_pool;
  std::vector<OperatorSample> train;
  std::vector<TestCase> test;
};
DatasetBundle build_dataset(const std::vector<Trajectory>& n1, const std::vector<Trajectory>& n2,
                            const RunConfig& cfg);

/// Test cases with N(0, sigma^2) added to every sensor value; the noise
/// substream is keyed by trajectory id.
std::vector<TestCase> with_input_noise(const std::vector<TestCase>& cases, double sigma,
                                       std::uint64_t seed);

/// Throws DimensionError unless the checkpoint's m matches the cases.
void require_compatible(const DeepOnetConfig& net, const std::vector<TestCase>& cases);

enum class Which { vanilla, prob, bayes };
std::string to_string(Which w);
Which which_from_string(const std::string& s);

/// A trained model of any of the three kinds.
struct Predictor {
  Which which = Which::vanilla;
  Checkpoint checkpoint;        // vanilla or prob
  PosteriorEnsemble ensemble;   // bayes
  TrajectoryReport predict(const TestCase& tc) const;
  DeepOnetConfig config() const;
};

/// Scores the `n_test` cases chosen by select_subset(eval seed).
PredictionReport evaluate(const Predictor& model, const std::vector<TestCase>& cases,
                          const EvalConfig& ev);

/// Prediction minus target on every training sample.
std::vector<double> training_residuals(const DeepOnetParams& params,
                                       const std::vector<OperatorSample>& data);

// Ensemble storage: one checkpoint per member plus a JSON chain manifest.
void save_ensemble(const std::filesystem::path& dir, const BayesRun& run, const BayesConfig& cfg,
                   const nlohmann::json& run_config);
PosteriorEnsemble load_ensemble(const std::filesystem::path& manifest);

/// Writes text and returns its content hash.
std::string emit(const std::filesystem::path& path, const std::string& text);

}  // namespace postfault
