#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "postfault/net.hpp"
#include "postfault/parameters.hpp"
#include "postfault/tensor.hpp"

namespace postfault {

struct DeepOnetConfig {
  std::size_t m = 200;  // branch sensors
  std::size_t q = 100;  // latent features
  std::size_t branch_width = 100;
  std::size_t branch_depth = 3;
  std::size_t trunk_width = 100;
  std::size_t trunk_depth = 3;

  ModifiedMlpConfig branch() const { return {m, branch_width, branch_depth, q}; }
  ModifiedMlpConfig trunk() const { return {1, trunk_width, trunk_depth, q}; }
  void validate() const;
  bool operator==(const DeepOnetConfig&) const = default;
};

/// log sigma is clamped into this range before exponentiation.
inline constexpr double kLogSigmaMin = -10.0;
inline constexpr double kLogSigmaMax = 3.0;
/// log sigma read-out weights start at this fraction of Glorot scale.
inline constexpr double kLogSigmaInitScale = 0.1;

struct DeepOnetParams {
  DeepOnetConfig config;
  ModifiedMlpParams branch;
  ModifiedMlpParams trunk;
  double tau_o = 0.0;

  static DeepOnetParams init(const DeepOnetConfig& config, std::uint64_t seed);
  ParameterVector to_vector() const;
  static DeepOnetParams from_vector(const ParameterVector& pv, const DeepOnetConfig& config);
  bool operator==(const DeepOnetParams&) const = default;
};

/// Branch and trunk share every layer except the read-out; the read-out
/// stored in branch/trunk is the mu head, the *_logsig tensors the second head.
struct ProbDeepOnetParams {
  DeepOnetConfig config;
  ModifiedMlpParams branch;
  ModifiedMlpParams trunk;
  Tensor branch_logsig_w, branch_logsig_b;
  Tensor trunk_logsig_w, trunk_logsig_b;
  double tau_o_mu = 0.0;
  double tau_o_logsig = 0.0;

  static ProbDeepOnetParams init(const DeepOnetConfig& config, std::uint64_t seed);
  ParameterVector to_vector() const;
  static ProbDeepOnetParams from_vector(const ParameterVector& pv, const DeepOnetConfig& config);

  /// Plain DeepONet built from the mu heads.
  DeepOnetParams mu_channel() const;
  /// Plain DeepONet built from the log sigma heads (unclamped output).
  DeepOnetParams logsig_channel() const;
  bool operator==(const ProbDeepOnetParams&) const = default;
};

struct GaussianPrediction {
  double y = 0.0;
  double mu = 0.0;
  double sigma = 1.0;
};

/// Posterior samples, newest first: members[0] is the last retained chain state.
struct PosteriorEnsemble {
  DeepOnetConfig config;
  std::vector<ParameterVector> members;
  std::vector<std::size_t> iterations;  // outer iteration of each member
  std::string config_hash;
};

struct EnsemblePrediction {
  std::vector<double> mean;
  std::vector<double> std;
  Tensor members;  // M x k
};

/// Number of input rows pushed through the branch / trunk nets on this thread.
struct EvalCounters {
  std::size_t branch_rows = 0;
  std::size_t trunk_rows = 0;
};
EvalCounters& eval_counters();

std::vector<double> predict(const DeepOnetParams& params, std::span<const double> u,
                            std::span<const double> ys);
std::vector<GaussianPrediction> predict_prob(const ProbDeepOnetParams& params,
                                             std::span<const double> u,
                                             std::span<const double> ys);
EnsemblePrediction ensemble_predict(const PosteriorEnsemble& ensemble, std::span<const double> u,
                                    std::span<const double> ys);

/// Predictions for many inputs on a shared query grid: U is n x m, result n x k.
Tensor predict_grid(const DeepOnetParams& params, const Tensor& u, std::span<const double> ys);
struct GaussianGrid {
  Tensor mu;
  Tensor sigma;
};
GaussianGrid predict_prob_grid(const ProbDeepOnetParams& params, const Tensor& u,
                               std::span<const double> ys);

// Tape-level building blocks used by the losses.

struct DeepOnetVars {
  MlpVars branch, trunk;
  Var tau_o;
};
DeepOnetVars bind(Tape& tape, const DeepOnetParams& params, bool trainable);
/// Row-wise G(u_i)(y_i) for U [n x m] and Y [n x 1]; result [n x 1].
Var pointwise(const DeepOnetVars& net, Var u, Var y);

struct ProbDeepOnetVars {
  MlpVars branch, trunk;
  Var branch_logsig_w, branch_logsig_b, trunk_logsig_w, trunk_logsig_b;
  Var tau_o_mu, tau_o_logsig;
};
ProbDeepOnetVars bind(Tape& tape, const ProbDeepOnetParams& params, bool trainable);
struct ProbOutputs {
  Var mu;
  Var logsig;  // already clamped
};
ProbOutputs pointwise(const ProbDeepOnetVars& net, Var u, Var y);

}  // namespace postfault
