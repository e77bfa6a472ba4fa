#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "postfault/checkpoint.hpp"
#include "postfault/dataset.hpp"
#include "postfault/deeponet.hpp"
#include "postfault/random.hpp"

namespace postfault {

struct BayesConfig {
  double prior_precision = 1.0;  // lambda
  double sigma_l = 0.01;         // likelihood scale, pu
  double step = 1e-5;            // epsilon
  double friction = 10.0;        // C
  double bhat = 0.0;             // noise estimate B-hat
  std::size_t inner = 50;
  std::size_t outer = 2000;
  std::size_t burn_in = 1000;
  std::size_t thinning = 5;
  std::size_t ensemble = 100;  // M
  std::size_t batch = 256;
  std::uint64_t seed = 0;

  /// Throws ConfigError; in particular C < B-hat is rejected, never clamped.
  void validate() const;
  /// Number of post-burn-in samples the thinning schedule produces.
  std::size_t available_samples() const;
};

nlohmann::json to_json(const BayesConfig& c);
BayesConfig bayes_config_from_json(const nlohmann::json& j);

/// A model whose likelihood is Gaussian in the residuals r_i(theta).
class SquaredResidualModel {
 public:
  virtual ~SquaredResidualModel() = default;
  virtual std::size_t size() const = 0;        // |D|
  virtual std::size_t parameters() const = 0;  // p
  /// sum_i r_i^2 over `idx`; adds d/dtheta of that sum into *grad when given.
  virtual double residual_ss(std::span<const double> theta, std::span<const std::size_t> idx,
                             std::vector<double>* grad) const = 0;
  double residual_ss(std::span<const double> theta) const;
};

/// y_i = theta . x_i with x_i rows of a design matrix; the conjugate benchmark.
class LinearModel : public SquaredResidualModel {
 public:
  LinearModel(std::vector<std::vector<double>> x, std::vector<double> y);
  std::size_t size() const override { return y_.size(); }
  std::size_t parameters() const override { return p_; }
  double residual_ss(std::span<const double> theta, std::span<const std::size_t> idx,
                     std::vector<double>* grad) const override;
  using SquaredResidualModel::residual_ss;

 private:
  std::vector<std::vector<double>> x_;
  std::vector<double> y_;
  std::size_t p_;
};

/// Vanilla DeepONet on operator samples; theta is laid out like `layout`.
class DeepOnetModel : public SquaredResidualModel {
 public:
  DeepOnetModel(const std::vector<OperatorSample>& data, DeepOnetConfig config,
                ParameterVector layout);
  std::size_t size() const override { return data_.size(); }
  std::size_t parameters() const override { return layout_.size(); }
  double residual_ss(std::span<const double> theta, std::span<const std::size_t> idx,
                     std::vector<double>* grad) const override;
  using SquaredResidualModel::residual_ss;

 private:
  const std::vector<OperatorSample>& data_;
  DeepOnetConfig config_;
  ParameterVector layout_;
};

/// U = sum r^2 / (2 s^2) + N/2 log(2 pi s^2) + lambda/2 |theta|^2 + p/2 log(2 pi / lambda)
double potential_energy(const SquaredResidualModel& model, std::span<const double> theta,
                        const BayesConfig& cfg);

/// Minibatch estimate of grad U: likelihood part scaled by |D|/|batch|, prior
/// part lambda*theta added unscaled. Throws SamplerError if non-finite.
std::vector<double> noisy_grad(const SquaredResidualModel& model, std::span<const double> theta,
                               std::span<const std::size_t> batch, const BayesConfig& cfg,
                               std::size_t iteration = 0);

/// Uniform draw of k distinct indices out of n.
std::vector<std::size_t> draw_minibatch(std::size_t n, std::size_t k, Rng& rng);

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

/// One inner step, in the order: theta += eps r; g = grad(theta);
/// r += -eps g - eps C r_old + N(0, 2 (C - B) eps).
void sghmc_step(std::vector<double>& theta, std::vector<double>& r, const GradientFn& grad,
                const BayesConfig& cfg, Rng& rng);

struct ChainSample {
  std::size_t iteration = 0;
  std::vector<double> theta;
};

struct ChainResult {
  std::vector<ChainSample> retained;  // newest first
  std::vector<double> u_trace;        // U(theta) after every outer iteration
};

using OuterCallback = std::function<void(std::size_t iteration, double u)>;

ChainResult run_chain(const SquaredResidualModel& model, std::vector<double> theta0,
                      const BayesConfig& cfg, const OuterCallback& on_outer = {});

struct BayesRun {
  PosteriorEnsemble ensemble;
  std::vector<double> u_trace;
};

/// Samples a Bayesian DeepONet starting from a vanilla checkpoint.
BayesRun sghmc_run(const std::vector<OperatorSample>& data, const Checkpoint& init,
                   const BayesConfig& cfg, const OuterCallback& on_outer = {});

std::string u_trace_csv(const std::vector<double>& trace);

}  // namespace postfault
