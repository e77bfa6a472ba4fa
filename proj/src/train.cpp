#include "postfault/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "postfault/random.hpp"

namespace postfault {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::vanilla ? "vanilla" : "prob"; }

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "vanilla") return ModelKind::vanilla;
  if (s == "prob") return ModelKind::prob;
  throw ConfigError("unknown model kind '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must be in (0, 1)");
  if (!(min_lr >= 0.0)) throw ConfigError("min lr must be >= 0");
  if (!(threshold >= 0.0)) throw ConfigError("plateau threshold must be >= 0");
  if (!(val_frac >= 0.0 && val_frac < 1.0)) throw ConfigError("val_frac must be in [0, 1)");
}

Var mse_loss(const DeepOnetVars& net, Tape& tape, const Batch& batch) {
  Var pred = pointwise(net, tape.constant(batch.u), tape.constant(batch.y));
  return mean(square(pred - tape.constant(batch.target)));
}

Var nll_loss(const ProbDeepOnetVars& net, Tape& tape, const Batch& batch) {
  ProbOutputs out = pointwise(net, tape.constant(batch.u), tape.constant(batch.y));
  // 0.5 (mu - t)^2 / sigma^2 + log sigma + 0.5 log(2 pi), with sigma^-2 = exp(-2 log sigma)
  Var r2 = square(out.mu - tape.constant(batch.target));
  Var inv_var = exp(scale(out.logsig, -2.0));
  Var per_point = scale(r2 * inv_var, 0.5) + out.logsig;
  return shift(mean(per_point), kHalfLog2Pi);
}

double mse_loss(const DeepOnetParams& params, const std::vector<OperatorSample>& batch) {
  Tape tape;
  return mse_loss(bind(tape, params, false), tape, collate(batch)).value().item();
}

double nll_loss(const ProbDeepOnetParams& params, const std::vector<OperatorSample>& batch) {
  Tape tape;
  return nll_loss(bind(tape, params, false), tape, collate(batch)).value().item();
}

void adam_step(AdamState& s, ParameterVector& params, const Gradients& grads) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) throw TrainingError("gradient for unknown parameter", name);
    if (g.size() != params.slot(name).size()) {
      throw TrainingError("gradient shape does not match parameter", name);
    }
    if (!g.all_finite()) throw TrainingError("non-finite gradient for '" + name + "'", name);
  }
  ++s.t;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (const auto& [name, g] : grads) {
    auto theta = params.view(name);
    auto& m = s.m[name];
    auto& v = s.v[name];
    if (m.empty()) {
      m.assign(theta.size(), 0.0);
      v.assign(theta.size(), 0.0);
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

PlateauScheduler::PlateauScheduler(double initial_best, std::size_t patience, double factor,
                                   double min_lr, double threshold)
    : best_(initial_best), patience_(patience), factor_(factor), min_lr_(min_lr),
      threshold_(threshold) {}

double PlateauScheduler::step(double loss, double lr) {
  if (loss < best_ - threshold_ * std::abs(best_)) {
    best_ = loss;
    wait_ = 0;
    return lr;
  }
  if (++wait_ >= patience_) {
    wait_ = 0;
    return std::max(lr * factor_, min_lr_);
  }
  return lr;
}

namespace {

struct Model {
  ModelKind kind;
  DeepOnetConfig config;
  ParameterVector params;

  // loss value and gradient on one batch
  double loss_and_grad(const Batch& b, Gradients* grads) const {
    Tape tape;
    Var loss;
    if (kind == ModelKind::vanilla) {
      auto p = DeepOnetParams::from_vector(params, config);
      loss = mse_loss(bind(tape, p, grads != nullptr), tape, b);
    } else {
      auto p = ProbDeepOnetParams::from_vector(params, config);
      loss = nll_loss(bind(tape, p, grads != nullptr), tape, b);
    }
    if (grads) *grads = tape.backward(loss);
    return loss.value().item();
  }

  Checkpoint checkpoint() const {
    return Checkpoint{to_string(kind), config, params, nlohmann::json::object()};
  }
};

// Mean loss over a sample set, evaluated in fixed-size chunks.
double dataset_loss(const Model& model, const std::vector<OperatorSample>& data,
                    std::size_t chunk) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    total += model.loss_and_grad(collate(data, idx), nullptr) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.size());
}

FitResult run_fit(Model model, const std::vector<OperatorSample>& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ContractError("no training samples");

  // hold out whole trajectories for the validation column
  std::set<std::size_t> ids;
  for (const auto& s : data) ids.insert(s.trajectory_id);
  std::vector<std::size_t> id_list(ids.begin(), ids.end());
  Rng split_rng = make_rng(cfg.seed, "val-split");
  std::shuffle(id_list.begin(), id_list.end(), split_rng);
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.val_frac * static_cast<double>(id_list.size())));
  const std::set<std::size_t> val_ids(id_list.begin(), id_list.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<OperatorSample> train, val;
  for (const auto& s : data) (val_ids.count(s.trajectory_id) ? val : train).push_back(s);
  if (train.empty()) throw ContractError("validation hold-out left no training samples");

  AdamState adam;
  adam.lr = cfg.lr;
  const std::size_t eval_chunk = std::max<std::size_t>(cfg.batch_size, 1024);
  double initial = 0.0;
  try {
    initial = dataset_loss(model, train, eval_chunk);
  } catch (const NumericError& e) {
    throw TrainingDiverged(std::string("initial loss is not finite: ") + e.what(), {});
  }
  if (!std::isfinite(initial)) throw TrainingDiverged("initial loss is not finite", {});
  PlateauScheduler plateau(initial, cfg.patience, cfg.factor, cfg.min_lr, cfg.threshold);

  FitResult result;
  result.best = model.checkpoint();
  result.best_loss = std::numeric_limits<double>::infinity();
  Rng shuffle_rng = make_rng(cfg.seed, "minibatches");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Gradients g;
      double loss = 0.0;
      try {
        loss = model.loss_and_grad(collate(train, idx), &g);
      } catch (const NumericError& e) {
        throw TrainingDiverged(std::string("training diverged: ") + e.what(), result.history);
      }
      if (!std::isfinite(loss)) throw TrainingDiverged("training loss is not finite", result.history);
      adam_step(adam, model.params, g);
      sum += loss * static_cast<double>(idx.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum / static_cast<double>(train.size());
    rec.lr = adam.lr;
    try {
      rec.val_loss = dataset_loss(model, val, eval_chunk);
    } catch (const NumericError&) {
      rec.val_loss = std::numeric_limits<double>::quiet_NaN();
    }
    result.history.push_back(rec);
    if (!std::isfinite(rec.train_loss)) {
      throw TrainingDiverged("training loss is not finite", result.history);
    }
    if (rec.train_loss < result.best_loss) {
      result.best_loss = rec.train_loss;
      result.best_epoch = epoch;
      result.best = model.checkpoint();
    }
    if (on_epoch) on_epoch(rec);
    adam.lr = plateau.step(rec.train_loss, adam.lr);
  }
  result.best.meta["best_epoch"] = result.best_epoch;
  result.best.meta["best_train_loss"] = result.best_loss;
  result.best.meta["epochs"] = cfg.epochs;
  result.best.meta["seed"] = cfg.seed;
  return result;
}

}  // namespace

FitResult fit(ModelKind kind, const std::vector<OperatorSample>& data, const DeepOnetConfig& net,
              const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  net.validate();
  if (!data.empty() && data.front().u->size() != net.m) {
    throw DimensionError("samples carry " + std::to_string(data.front().u->size()) +
                         " sensors, network expects " + std::to_string(net.m));
  }
  const std::uint64_t init_seed = substream_seed(config.seed, stream_tag("init"));
  Model model{kind, net,
              kind == ModelKind::vanilla ? DeepOnetParams::init(net, init_seed).to_vector()
                                         : ProbDeepOnetParams::init(net, init_seed).to_vector()};
  return run_fit(std::move(model), data, config, on_epoch);
}

FitResult fit_from(const Checkpoint& init, const std::vector<OperatorSample>& data,
                   const TrainConfig& config, const EpochCallback& on_epoch) {
  Model model{model_kind_from_string(init.kind), init.config, init.params};
  return run_fit(std::move(model), data, config, on_epoch);
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,lr\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + fmt(r.train_loss) + "," + fmt(r.val_loss) + "," +
           fmt(r.lr) + "\n";
  }
  return out;
}

}  // namespace postfault
