#include "postfault/deeponet.hpp"

#include <algorithm>
#include <cmath>

#include "postfault/error.hpp"
#include "postfault/random.hpp"

namespace postfault {

namespace {

void require_finite_input(std::span<const double> xs, const char* what) {
  for (double v : xs) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

void require_sensors(std::size_t got, std::size_t m) {
  if (got != m) {
    throw DimensionError("expected " + std::to_string(m) + " sensor values, got " +
                         std::to_string(got));
  }
}

Tensor as_column(std::span<const double> ys) { return Tensor::column(ys); }

// Features of the branch rows and trunk rows, counted.
Tensor branch_features(const MlpVars& b, Tape& tape, const Tensor& u, Var w, Var bias) {
  eval_counters().branch_rows += u.rows();
  return linear(hidden(b, tape.constant(u)), w, bias).value();
}

Tensor trunk_features(const MlpVars& t, Tape& tape, std::span<const double> ys, Var w, Var bias) {
  eval_counters().trunk_rows += ys.size();
  return linear(hidden(t, tape.constant(as_column(ys))), w, bias).value();
}

// out[i][j] = sum_k B[i][k] T[j][k] + tau
Tensor combine(const Tensor& b, const Tensor& t, double tau) {
  Tensor tt({t.cols(), t.rows()});
  for (std::size_t j = 0; j < t.rows(); ++j) {
    for (std::size_t k = 0; k < t.cols(); ++k) tt(k, j) = t(j, k);
  }
  Tensor out = matmul(b, tt);
  for (double& v : out.data()) v += tau;
  return out;
}

}  // namespace

void DeepOnetConfig::validate() const {
  if (m < 2) throw ConfigError("need at least 2 sensors");
  if (q < 1) throw ConfigError("latent dimension q must be >= 1");
  branch().validate();
  trunk().validate();
}

EvalCounters& eval_counters() {
  thread_local EvalCounters counters;
  return counters;
}

DeepOnetParams DeepOnetParams::init(const DeepOnetConfig& config, std::uint64_t seed) {
  config.validate();
  DeepOnetParams p;
  p.config = config;
  p.branch = glorot_init(config.branch(), substream_seed(seed, stream_tag("branch")));
  p.trunk = glorot_init(config.trunk(), substream_seed(seed, stream_tag("trunk")));
  p.tau_o = 0.0;
  return p;
}

ParameterVector DeepOnetParams::to_vector() const {
  ParameterVector pv;
  branch.append_to(pv, "branch");
  trunk.append_to(pv, "trunk");
  pv.append("tau_o", Tensor::scalar(tau_o));
  return pv;
}

DeepOnetParams DeepOnetParams::from_vector(const ParameterVector& pv,
                                           const DeepOnetConfig& config) {
  config.validate();
  DeepOnetParams p;
  p.config = config;
  p.branch = ModifiedMlpParams::read_from(pv, config.branch(), "branch");
  p.trunk = ModifiedMlpParams::read_from(pv, config.trunk(), "trunk");
  p.tau_o = pv.tensor("tau_o").item();
  return p;
}

ProbDeepOnetParams ProbDeepOnetParams::init(const DeepOnetConfig& config, std::uint64_t seed) {
  config.validate();
  ProbDeepOnetParams p;
  p.config = config;
  p.branch = glorot_init(config.branch(), substream_seed(seed, stream_tag("branch")));
  p.trunk = glorot_init(config.trunk(), substream_seed(seed, stream_tag("trunk")));
  p.branch_logsig_w = glorot_uniform(config.branch_width, config.q,
                                     substream_seed(seed, stream_tag("branch.logsig")));
  p.branch_logsig_b = Tensor({1, config.q}, 0.0);
  p.trunk_logsig_w = glorot_uniform(config.trunk_width, config.q,
                                    substream_seed(seed, stream_tag("trunk.logsig")));
  p.trunk_logsig_b = Tensor({1, config.q}, 0.0);
  // At full Glorot scale the q-term inner product starts well outside the
  // clamp, where log sigma gets no gradient at all. Start it near zero.
  for (double& w : p.branch_logsig_w.data()) w *= kLogSigmaInitScale;
  for (double& w : p.trunk_logsig_w.data()) w *= kLogSigmaInitScale;
  return p;
}

ParameterVector ProbDeepOnetParams::to_vector() const {
  ParameterVector pv;
  branch.append_to(pv, "branch");
  pv.append("branch.logsig.w", branch_logsig_w);
  pv.append("branch.logsig.b", branch_logsig_b);
  trunk.append_to(pv, "trunk");
  pv.append("trunk.logsig.w", trunk_logsig_w);
  pv.append("trunk.logsig.b", trunk_logsig_b);
  pv.append("tau_o_mu", Tensor::scalar(tau_o_mu));
  pv.append("tau_o_logsig", Tensor::scalar(tau_o_logsig));
  return pv;
}

ProbDeepOnetParams ProbDeepOnetParams::from_vector(const ParameterVector& pv,
                                                   const DeepOnetConfig& config) {
  config.validate();
  ProbDeepOnetParams p;
  p.config = config;
  p.branch = ModifiedMlpParams::read_from(pv, config.branch(), "branch");
  p.trunk = ModifiedMlpParams::read_from(pv, config.trunk(), "trunk");
  p.branch_logsig_w = pv.tensor("branch.logsig.w");
  p.branch_logsig_b = pv.tensor("branch.logsig.b");
  p.trunk_logsig_w = pv.tensor("trunk.logsig.w");
  p.trunk_logsig_b = pv.tensor("trunk.logsig.b");
  if (p.branch_logsig_w.shape() != Shape{config.branch_width, config.q} ||
      p.trunk_logsig_w.shape() != Shape{config.trunk_width, config.q} ||
      p.branch_logsig_b.shape() != Shape{1, config.q} ||
      p.trunk_logsig_b.shape() != Shape{1, config.q}) {
    throw DimensionError("log sigma head shapes do not match the configuration");
  }
  p.tau_o_mu = pv.tensor("tau_o_mu").item();
  p.tau_o_logsig = pv.tensor("tau_o_logsig").item();
  return p;
}

DeepOnetParams ProbDeepOnetParams::mu_channel() const {
  return DeepOnetParams{config, branch, trunk, tau_o_mu};
}

DeepOnetParams ProbDeepOnetParams::logsig_channel() const {
  DeepOnetParams p{config, branch, trunk, tau_o_logsig};
  p.branch.out_w = branch_logsig_w;
  p.branch.out_b = branch_logsig_b;
  p.trunk.out_w = trunk_logsig_w;
  p.trunk.out_b = trunk_logsig_b;
  return p;
}

DeepOnetVars bind(Tape& tape, const DeepOnetParams& params, bool trainable) {
  DeepOnetVars v;
  v.branch = bind(tape, params.branch, "branch", trainable);
  v.trunk = bind(tape, params.trunk, "trunk", trainable);
  Tensor tau = Tensor::scalar(params.tau_o);
  v.tau_o = trainable ? tape.leaf("tau_o", tau) : tape.constant(tau);
  return v;
}

Var pointwise(const DeepOnetVars& net, Var u, Var y) {
  if (u.value().rows() != y.value().rows()) throw DimensionError("u and y row counts differ");
  Var b = forward(net.branch, u);
  Var t = forward(net.trunk, y);
  return row_sum(b * t) + net.tau_o;
}

ProbDeepOnetVars bind(Tape& tape, const ProbDeepOnetParams& params, bool trainable) {
  auto put = [&](const char* name, const Tensor& t) {
    return trainable ? tape.leaf(name, t) : tape.constant(t);
  };
  ProbDeepOnetVars v;
  v.branch = bind(tape, params.branch, "branch", trainable);
  v.branch_logsig_w = put("branch.logsig.w", params.branch_logsig_w);
  v.branch_logsig_b = put("branch.logsig.b", params.branch_logsig_b);
  v.trunk = bind(tape, params.trunk, "trunk", trainable);
  v.trunk_logsig_w = put("trunk.logsig.w", params.trunk_logsig_w);
  v.trunk_logsig_b = put("trunk.logsig.b", params.trunk_logsig_b);
  v.tau_o_mu = put("tau_o_mu", Tensor::scalar(params.tau_o_mu));
  v.tau_o_logsig = put("tau_o_logsig", Tensor::scalar(params.tau_o_logsig));
  return v;
}

ProbOutputs pointwise(const ProbDeepOnetVars& net, Var u, Var y) {
  if (u.value().rows() != y.value().rows()) throw DimensionError("u and y row counts differ");
  Var hb = hidden(net.branch, u);
  Var ht = hidden(net.trunk, y);
  Var b_mu = linear(hb, net.branch.out_w, net.branch.out_b);
  Var t_mu = linear(ht, net.trunk.out_w, net.trunk.out_b);
  Var b_ls = linear(hb, net.branch_logsig_w, net.branch_logsig_b);
  Var t_ls = linear(ht, net.trunk_logsig_w, net.trunk_logsig_b);
  ProbOutputs out;
  out.mu = row_sum(b_mu * t_mu) + net.tau_o_mu;
  out.logsig = clamp(row_sum(b_ls * t_ls) + net.tau_o_logsig, kLogSigmaMin, kLogSigmaMax);
  return out;
}

Tensor predict_grid(const DeepOnetParams& params, const Tensor& u, std::span<const double> ys) {
  if (u.rank() != 2) throw DimensionError("predict_grid expects an n x m input matrix");
  require_sensors(u.cols(), params.config.m);
  require_finite_input(u.data(), "branch input");
  require_finite_input(ys, "query times");
  if (ys.empty()) return Tensor();
  Tape tape;
  DeepOnetVars v = bind(tape, params, false);
  Tensor b = branch_features(v.branch, tape, u, v.branch.out_w, v.branch.out_b);
  Tensor t = trunk_features(v.trunk, tape, ys, v.trunk.out_w, v.trunk.out_b);
  return combine(b, t, params.tau_o);
}

GaussianGrid predict_prob_grid(const ProbDeepOnetParams& params, const Tensor& u,
                               std::span<const double> ys) {
  if (u.rank() != 2) throw DimensionError("predict_prob_grid expects an n x m input matrix");
  require_sensors(u.cols(), params.config.m);
  require_finite_input(u.data(), "branch input");
  require_finite_input(ys, "query times");
  if (ys.empty()) return {};
  Tape tape;
  ProbDeepOnetVars v = bind(tape, params, false);
  eval_counters().branch_rows += u.rows();
  eval_counters().trunk_rows += ys.size();
  Var hb = hidden(v.branch, tape.constant(u));
  Var ht = hidden(v.trunk, tape.constant(as_column(ys)));
  // copy each head out before the next one grows the tape
  const Tensor bmu = linear(hb, v.branch.out_w, v.branch.out_b).value();
  const Tensor tmu = linear(ht, v.trunk.out_w, v.trunk.out_b).value();
  const Tensor bls = linear(hb, v.branch_logsig_w, v.branch_logsig_b).value();
  const Tensor tls = linear(ht, v.trunk_logsig_w, v.trunk_logsig_b).value();
  Tensor mu = combine(bmu, tmu, params.tau_o_mu);
  Tensor ls = combine(bls, tls, params.tau_o_logsig);
  for (double& s : ls.data()) s = std::exp(std::clamp(s, kLogSigmaMin, kLogSigmaMax));
  return {std::move(mu), std::move(ls)};
}

std::vector<double> predict(const DeepOnetParams& params, std::span<const double> u,
                            std::span<const double> ys) {
  require_sensors(u.size(), params.config.m);
  Tensor out = predict_grid(params, Tensor::row(u), ys);
  return out.values();
}

std::vector<GaussianPrediction> predict_prob(const ProbDeepOnetParams& params,
                                             std::span<const double> u,
                                             std::span<const double> ys) {
  require_sensors(u.size(), params.config.m);
  GaussianGrid g = predict_prob_grid(params, Tensor::row(u), ys);
  std::vector<GaussianPrediction> out(ys.size());
  for (std::size_t j = 0; j < ys.size(); ++j) out[j] = {ys[j], g.mu[j], g.sigma[j]};
  return out;
}

EnsemblePrediction ensemble_predict(const PosteriorEnsemble& ensemble, std::span<const double> u,
                                    std::span<const double> ys) {
  const std::size_t m_members = ensemble.members.size();
  if (m_members < 2) throw ContractError("ensemble needs at least 2 members");
  const std::size_t k = ys.size();
  EnsemblePrediction out;
  out.members = Tensor({m_members, std::max<std::size_t>(k, 1)}, 0.0);
  for (std::size_t j = 0; j < m_members; ++j) {
    auto p = DeepOnetParams::from_vector(ensemble.members[j], ensemble.config);
    auto row = predict(p, u, ys);
    for (std::size_t i = 0; i < k; ++i) out.members(j, i) = row[i];
  }
  out.mean.assign(k, 0.0);
  out.std.assign(k, 0.0);
  const double n = static_cast<double>(m_members);
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m_members; ++j) s += out.members(j, i);
    const double mu = s / n;
    double ss = 0.0;
    for (std::size_t j = 0; j < m_members; ++j) {
      const double d = out.members(j, i) - mu;
      ss += d * d;
    }
    out.mean[i] = mu;
    out.std[i] = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

}  // namespace postfault
