#include "postfault/sghmc.hpp"

#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "postfault/error.hpp"

namespace postfault {

void BayesConfig::validate() const {
  if (!(prior_precision > 0.0)) throw ConfigError("prior precision must be positive");
  if (!(sigma_l > 0.0)) throw ConfigError("likelihood scale must be positive");
  if (!(step > 0.0)) throw ConfigError("step size must be positive");
  if (!(bhat >= 0.0)) throw ConfigError("noise estimate B-hat must be >= 0");
  if (!(friction >= bhat)) {
    throw ConfigError("friction C must be >= B-hat (C=" + std::to_string(friction) +
                      ", B-hat=" + std::to_string(bhat) + ")");
  }
  if (inner < 1 || outer < 1) throw ConfigError("need at least one inner and one outer step");
  if (thinning < 1) throw ConfigError("thinning must be >= 1");
  if (burn_in >= outer) throw ConfigError("burn-in must be shorter than the chain");
  if (batch < 1) throw ConfigError("minibatch size must be >= 1");
  if (ensemble < 1) throw ConfigError("ensemble size must be >= 1");
  if (ensemble > available_samples()) {
    throw ConfigError("ensemble size " + std::to_string(ensemble) + " exceeds the " +
                      std::to_string(available_samples()) + " thinned post-burn-in samples");
  }
}

std::size_t BayesConfig::available_samples() const {
  return outer > burn_in ? (outer - burn_in) / thinning : 0;
}

nlohmann::json to_json(const BayesConfig& c) {
  return {{"prior_precision", c.prior_precision},
          {"sigma_l", c.sigma_l},
          {"step", c.step},
          {"friction", c.friction},
          {"bhat", c.bhat},
          {"inner", c.inner},
          {"outer", c.outer},
          {"burn_in", c.burn_in},
          {"thinning", c.thinning},
          {"ensemble", c.ensemble},
          {"batch", c.batch},
          {"seed", c.seed}};
}

BayesConfig bayes_config_from_json(const nlohmann::json& j) {
  BayesConfig c;
  try {
    c.prior_precision = j.at("prior_precision").get<double>();
    c.sigma_l = j.at("sigma_l").get<double>();
    c.step = j.at("step").get<double>();
    c.friction = j.at("friction").get<double>();
    c.bhat = j.at("bhat").get<double>();
    c.inner = j.at("inner").get<std::size_t>();
    c.outer = j.at("outer").get<std::size_t>();
    c.burn_in = j.at("burn_in").get<std::size_t>();
    c.thinning = j.at("thinning").get<std::size_t>();
    c.ensemble = j.at("ensemble").get<std::size_t>();
    c.batch = j.at("batch").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad sampler config: ") + e.what());
  }
  c.validate();
  return c;
}

double SquaredResidualModel::residual_ss(std::span<const double> theta) const {
  std::vector<std::size_t> all(size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return residual_ss(theta, all, nullptr);
}

LinearModel::LinearModel(std::vector<std::vector<double>> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)), p_(x_.empty() ? 0 : x_.front().size()) {
  if (x_.size() != y_.size() || x_.empty()) throw DimensionError("design and targets disagree");
  for (const auto& row : x_) {
    if (row.size() != p_ || p_ == 0) throw DimensionError("ragged design matrix");
  }
}

double LinearModel::residual_ss(std::span<const double> theta, std::span<const std::size_t> idx,
                                std::vector<double>* grad) const {
  if (theta.size() != p_) throw DimensionError("theta has the wrong length");
  double ss = 0.0;
  for (std::size_t i : idx) {
    const auto& x = x_.at(i);
    double r = -y_[i];
    for (std::size_t k = 0; k < p_; ++k) r += theta[k] * x[k];
    ss += r * r;
    if (grad) {
      for (std::size_t k = 0; k < p_; ++k) (*grad)[k] += 2.0 * r * x[k];
    }
  }
  return ss;
}

DeepOnetModel::DeepOnetModel(const std::vector<OperatorSample>& data, DeepOnetConfig config,
                             ParameterVector layout)
    : data_(data), config_(config), layout_(std::move(layout)) {
  if (data_.empty()) throw ContractError("no samples");
  if (data_.front().u->size() != config_.m) {
    throw DimensionError("samples carry " + std::to_string(data_.front().u->size()) +
                         " sensors, network expects " + std::to_string(config_.m));
  }
}

double DeepOnetModel::residual_ss(std::span<const double> theta, std::span<const std::size_t> idx,
                                  std::vector<double>* grad) const {
  if (theta.size() != layout_.size()) throw DimensionError("theta has the wrong length");
  const ParameterVector pv = layout_.with_values({theta.begin(), theta.end()});
  const DeepOnetParams p = DeepOnetParams::from_vector(pv, config_);
  Batch b = collate(data_, idx);
  Tape tape;
  DeepOnetVars v = bind(tape, p, grad != nullptr);
  Var pred = pointwise(v, tape.constant(b.u), tape.constant(b.y));
  Var ss = sum(square(pred - tape.constant(b.target)));
  const double out = ss.value().item();
  if (grad) {
    const auto g = pv.flatten(tape.backward(ss));
    for (std::size_t k = 0; k < g.size(); ++k) (*grad)[k] += g[k];
  }
  return out;
}

double potential_energy(const SquaredResidualModel& model, std::span<const double> theta,
                        const BayesConfig& cfg) {
  if (model.size() == 0) throw ContractError("potential energy needs data");
  const double s2 = cfg.sigma_l * cfg.sigma_l;
  const double n = static_cast<double>(model.size());
  const double p = static_cast<double>(theta.size());
  double norm2 = 0.0;
  for (double t : theta) norm2 += t * t;
  return model.residual_ss(theta) / (2.0 * s2) + 0.5 * n * std::log(2.0 * std::numbers::pi * s2) +
         0.5 * cfg.prior_precision * norm2 +
         0.5 * p * std::log(2.0 * std::numbers::pi / cfg.prior_precision);
}

std::vector<double> noisy_grad(const SquaredResidualModel& model, std::span<const double> theta,
                               std::span<const std::size_t> batch, const BayesConfig& cfg,
                               std::size_t iteration) {
  if (batch.empty()) throw ContractError("empty minibatch");
  std::vector<double> g(theta.size(), 0.0);
  try {
    model.residual_ss(theta, batch, &g);
  } catch (const NumericError& e) {
    throw SamplerError(std::string("non-finite likelihood: ") + e.what(), iteration);
  }
  const double scale = static_cast<double>(model.size()) / static_cast<double>(batch.size()) /
                       (2.0 * cfg.sigma_l * cfg.sigma_l);
  for (std::size_t k = 0; k < g.size(); ++k) {
    g[k] = scale * g[k] + cfg.prior_precision * theta[k];
    if (!std::isfinite(g[k])) throw SamplerError("non-finite gradient", iteration);
  }
  return g;
}

std::vector<std::size_t> draw_minibatch(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw ContractError("minibatch larger than the data");
  // partial Fisher-Yates on a scratch permutation
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  perm.resize(k);
  return perm;
}

void sghmc_step(std::vector<double>& theta, std::vector<double>& r, const GradientFn& grad,
                const BayesConfig& cfg, Rng& rng) {
  const double eps = cfg.step;
  for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += eps * r[k];
  const std::vector<double> g = grad(theta);
  const double noise_sd = std::sqrt(2.0 * (cfg.friction - cfg.bhat) * eps);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double kick = noise_sd > 0.0 ? noise_sd * normal(rng) : 0.0;
    r[k] = r[k] - eps * g[k] - eps * cfg.friction * r[k] + kick;
  }
}

ChainResult run_chain(const SquaredResidualModel& model, std::vector<double> theta,
                      const BayesConfig& cfg, const OuterCallback& on_outer) {
  cfg.validate();
  if (theta.size() != model.parameters()) throw DimensionError("initial theta has the wrong length");
  const std::size_t batch = std::min(cfg.batch, model.size());
  Rng rng = make_rng(cfg.seed, "sghmc");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> r(theta.size());
  std::deque<ChainSample> kept;
  ChainResult out;
  out.u_trace.reserve(cfg.outer);

  for (std::size_t it = 1; it <= cfg.outer; ++it) {
    for (double& v : r) v = normal(rng);
    for (std::size_t s = 0; s < cfg.inner; ++s) {
      const auto idx = draw_minibatch(model.size(), batch, rng);
      sghmc_step(theta, r,
                 [&](std::span<const double> th) { return noisy_grad(model, th, idx, cfg, it); },
                 cfg, rng);
    }
    for (std::size_t k = 0; k < theta.size(); ++k) {
      if (!std::isfinite(theta[k]) || !std::isfinite(r[k])) {
        throw SamplerError("non-finite sampler state", it);
      }
    }
    double u = 0.0;
    try {
      u = potential_energy(model, theta, cfg);
    } catch (const NumericError& e) {
      throw SamplerError(std::string("non-finite potential: ") + e.what(), it);
    }
    if (!std::isfinite(u)) throw SamplerError("non-finite potential", it);
    out.u_trace.push_back(u);
    if (on_outer) on_outer(it, u);
    if (it > cfg.burn_in && (it - cfg.burn_in) % cfg.thinning == 0) {
      kept.push_front(ChainSample{it, theta});
      if (kept.size() > cfg.ensemble) kept.pop_back();
    }
  }
  out.retained.assign(kept.begin(), kept.end());
  return out;
}

BayesRun sghmc_run(const std::vector<OperatorSample>& data, const Checkpoint& init,
                   const BayesConfig& cfg, const OuterCallback& on_outer) {
  cfg.validate();
  if (init.kind != "vanilla") {
    throw ContractError("sampling starts from a vanilla checkpoint, got '" + init.kind + "'");
  }
  DeepOnetModel model(data, init.config, init.params);
  ChainResult chain = run_chain(model, init.params.values(), cfg, on_outer);

  BayesRun run;
  run.ensemble.config = init.config;
  run.ensemble.config_hash =
      content_hash(to_json(cfg).dump() + to_json(init.config).dump() +
                   content_hash(encode_checkpoint(init)));
  for (auto& s : chain.retained) {
    run.ensemble.members.push_back(init.params.with_values(std::move(s.theta)));
    run.ensemble.iterations.push_back(s.iteration);
  }
  run.u_trace = std::move(chain.u_trace);
  return run;
}

std::string u_trace_csv(const std::vector<double>& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,U\n";
  for (std::size_t i = 0; i < trace.size(); ++i) os << (i + 1) << "," << trace[i] << "\n";
  return os.str();
}

}  // namespace postfault
