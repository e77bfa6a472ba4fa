#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "postfault/checkpoint.hpp"
#include "postfault/dataset.hpp"
#include "postfault/deeponet.hpp"
#include "postfault/error.hpp"
#include "postfault/parameters.hpp"

namespace postfault {

enum class ModelKind { vanilla, prob };
std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 10000;
  std::size_t batch_size = 256;
  double lr = 1e-4;
  std::size_t patience = 200;
  double factor = 0.5;
  double min_lr = 1e-6;
  double threshold = 1e-4;  // relative improvement that resets patience
  double val_frac = 0.1;    // trajectories held out for the validation column
  std::uint64_t seed = 0;

  void validate() const;
};

// Losses. The tape versions are what training differentiates; the value
// versions evaluate the same expression without recording gradients.
Var mse_loss(const DeepOnetVars& net, Tape& tape, const Batch& batch);
Var nll_loss(const ProbDeepOnetVars& net, Tape& tape, const Batch& batch);
double mse_loss(const DeepOnetParams& params, const std::vector<OperatorSample>& batch);
double nll_loss(const ProbDeepOnetParams& params, const std::vector<OperatorSample>& batch);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

/// One bias-corrected Adam update of every slot that has a gradient.
/// Raises TrainingError naming the parameter if a gradient is non-finite.
void adam_step(AdamState& state, ParameterVector& params, const Gradients& grads);

/// Multiplies the learning rate by `factor` once the loss has gone `patience`
/// epochs without a relative improvement of `threshold` over the best so far.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_best, std::size_t patience, double factor, double min_lr,
                   double threshold);
  /// Feeds one epoch loss; returns the (possibly reduced) learning rate.
  double step(double loss, double lr);
  double best() const noexcept { return best_; }

 private:
  double best_;
  std::size_t patience_;
  double factor_;
  double min_lr_;
  double threshold_;
  std::size_t wait_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation split
  double lr = 0.0;
};

/// Raised when the loss goes non-finite; carries the history so far.
class TrainingDiverged : public TrainingError {
 public:
  TrainingDiverged(const std::string& what, std::vector<EpochRecord> history)
      : TrainingError(what), history_(std::move(history)) {}
  const std::vector<EpochRecord>& history() const noexcept { return history_; }

 private:
  std::vector<EpochRecord> history_;
};

struct FitResult {
  Checkpoint best;
  std::size_t best_epoch = 0;
  double best_loss = 0.0;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Adam with plateau decay. Holds out val_frac of the trajectories
/// for the validation column only; the returned checkpoint is the epoch with
/// the lowest epoch-average training loss.
FitResult fit(ModelKind kind, const std::vector<OperatorSample>& data, const DeepOnetConfig& net,
              const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Same, starting from given parameters instead of a fresh initialisation.
FitResult fit_from(const Checkpoint& init, const std::vector<OperatorSample>& data,
                   const TrainConfig& config, const EpochCallback& on_epoch = {});

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace postfault
