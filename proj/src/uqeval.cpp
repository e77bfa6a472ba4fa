#include "postfault/uqeval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "postfault/error.hpp"
#include "postfault/random.hpp"

namespace postfault {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": lengths " + std::to_string(a) + " and " +
                         std::to_string(b) + " differ");
  }
}

std::ostringstream csv_stream() {
  std::ostringstream os;
  os.precision(10);
  return os;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

RelativeErrors relative_errors(std::span<const double> pred, std::span<const double> target) {
  same_length(pred.size(), target.size(), "relative_errors");
  double d1 = 0.0, t1 = 0.0, d2 = 0.0, t2 = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    d1 += std::abs(d);
    t1 += std::abs(target[i]);
    d2 += d * d;
    t2 += target[i] * target[i];
  }
  if (!(t1 > 0.0)) throw ContractError("relative error of a zero-norm target");
  return {100.0 * d1 / t1, 100.0 * std::sqrt(d2 / t2)};
}

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ContractError("inverse normal needs p in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double lo = 0.02425, hi = 1.0 - lo;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= hi) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement against erfc
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double z_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ContractError("confidence level must be in (0, 1)");
  return inverse_normal_cdf(0.5 * (1.0 + level));
}

Interval confidence_interval(std::span<const double> mean, std::span<const double> std,
                             double level) {
  same_length(mean.size(), std.size(), "confidence_interval");
  const double z = z_value(level);
  Interval ci;
  ci.lower.resize(mean.size());
  ci.upper.resize(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (!(std[i] >= 0.0)) throw ContractError("negative standard deviation");
    ci.lower[i] = mean[i] - z * std[i];
    ci.upper[i] = mean[i] + z * std[i];
  }
  return ci;
}

double epsilon_ratio(const Interval& ci, std::span<const double> targets) {
  same_length(ci.lower.size(), targets.size(), "epsilon_ratio");
  same_length(ci.upper.size(), targets.size(), "epsilon_ratio");
  if (targets.empty()) throw ContractError("epsilon ratio of an empty mesh");
  std::size_t inside = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    inside += ci.lower[i] <= targets[i] && targets[i] <= ci.upper[i];
  }
  return 100.0 * static_cast<double>(inside) / static_cast<double>(targets.size());
}

void score(TrajectoryReport& r, double level) {
  r.errors = relative_errors(r.mean, r.targets);
  r.eps_ratio = r.std.empty() ? kNaN : epsilon_ratio(confidence_interval(r.mean, r.std, level), r.targets);
}

PredictionReport summarize(std::string model, std::vector<TrajectoryReport> rows, double level,
                           std::uint64_t eval_seed) {
  if (rows.empty()) throw ContractError("no trajectories to summarize");
  PredictionReport rep;
  rep.model = std::move(model);
  rep.level = level;
  rep.eval_seed = eval_seed;
  std::vector<double> l1, l2, eps;
  for (auto& r : rows) {
    score(r, level);
    l1.push_back(r.errors.l1);
    l2.push_back(r.errors.l2);
    if (!r.std.empty()) eps.push_back(r.eps_ratio);
  }
  rep.mean_l1 = mean_of(l1);
  rep.sd_l1 = sd_of(l1);
  rep.mean_l2 = mean_of(l2);
  rep.sd_l2 = sd_of(l2);
  rep.mean_eps_ratio = eps.size() == rows.size() ? mean_of(eps) : kNaN;
  rep.rows = std::move(rows);
  return rep;
}

std::vector<std::size_t> select_subset(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k > n) throw ContractError("subset larger than the set");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, "eval-subset");
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> chi_coverage_curve(const std::vector<TrajectoryReport>& rows,
                                       std::span<const double> chis) {
  for (std::size_t i = 0; i < chis.size(); ++i) {
    if (!(chis[i] >= 0.0) || (i > 0 && chis[i] < chis[i - 1])) {
      throw ContractError("chi values must be non-negative and increasing");
    }
  }
  std::vector<std::size_t> hits(chis.size(), 0);
  std::size_t total = 0;
  for (const auto& r : rows) {
    if (r.std.empty()) throw ContractError("chi coverage needs predicted standard deviations");
    same_length(r.mean.size(), r.targets.size(), "chi_coverage_curve");
    same_length(r.std.size(), r.targets.size(), "chi_coverage_curve");
    for (std::size_t i = 0; i < r.targets.size(); ++i) {
      const double dev = std::abs(r.mean[i] - r.targets[i]);
      for (std::size_t c = 0; c < chis.size(); ++c) hits[c] += dev <= chis[c] * r.std[i];
    }
    total += r.targets.size();
  }
  if (total == 0) throw ContractError("chi coverage over no points");
  std::vector<double> out(chis.size());
  for (std::size_t c = 0; c < chis.size(); ++c) {
    out[c] = static_cast<double>(hits[c]) / static_cast<double>(total);
  }
  return out;
}

double chi_reference(double chi) { return std::erf(chi / std::numbers::sqrt2); }

double UnderVoltageProfile::threshold(double t) const { return t <= t_cl + window ? early : late; }

AlarmOutcome classify_alarm(double mean, double lower, double upper, double truth,
                            double threshold) {
  AlarmOutcome o;
  o.mean = mean;
  o.lower = lower;
  o.upper = upper;
  o.truth = truth;
  o.threshold = threshold;
  const bool violation = truth < threshold;
  const bool reaches_below = lower < threshold;
  const bool all_below = upper < threshold;
  if (violation) {
    o.fn = !reaches_below;
    o.tp = reaches_below;
  } else {
    o.fp_conservative = reaches_below;
    o.fp_nonconservative = all_below;
    o.tn = !reaches_below;
  }
  return o;
}

double AlarmSummary::fn_rate() const { return n ? static_cast<double>(fn) / static_cast<double>(n) : 0.0; }
double AlarmSummary::fp_conservative_rate() const {
  return n ? static_cast<double>(fp_conservative) / static_cast<double>(n) : 0.0;
}
double AlarmSummary::fp_nonconservative_rate() const {
  return n ? static_cast<double>(fp_nonconservative) / static_cast<double>(n) : 0.0;
}

AlarmReport alarm_analysis(const std::vector<TrajectoryReport>& rows,
                           const UnderVoltageProfile& profile, double y_star, double level) {
  AlarmReport rep;
  rep.y_star = y_star;
  const double z = z_value(level);
  for (const auto& r : rows) {
    if (r.y.empty() || y_star <= profile.t_cl || y_star > r.y.back()) {
      throw ContractError("probe time outside the post-fault horizon");
    }
    if (r.std.empty()) throw ContractError("alarm analysis needs predicted standard deviations");
    // nearest mesh point to the probe
    std::size_t j = 0;
    for (std::size_t i = 1; i < r.y.size(); ++i) {
      if (std::abs(r.y[i] - y_star) < std::abs(r.y[j] - y_star)) j = i;
    }
    AlarmOutcome o = classify_alarm(r.mean[j], r.mean[j] - z * r.std[j], r.mean[j] + z * r.std[j],
                                    r.targets[j], profile.threshold(y_star));
    o.trajectory_id = r.trajectory_id;
    rep.outcomes.push_back(o);
    auto& s = rep.summary;
    ++s.n;
    s.fn += o.fn;
    s.fp_conservative += o.fp_conservative;
    s.fp_nonconservative += o.fp_nonconservative;
    s.tp += o.tp;
    s.tn += o.tn;
  }
  return rep;
}

NormalityResult residual_normality(std::span<const double> residuals, std::size_t bins) {
  const std::size_t n = residuals.size();
  if (n < 1000) throw ContractError("normality check needs at least 1000 residuals");
  if (bins < 1) throw ContractError("need at least one bin");
  double mean = 0.0;
  for (double r : residuals) mean += r;
  mean /= static_cast<double>(n);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double r : residuals) {
    const double d = r - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  double scale = 0.0;
  for (double r : residuals) scale = std::max(scale, std::abs(r));
  // roundoff in the mean leaves ~eps^2 spread on constant data
  if (!(m2 > 1e-24 * scale * scale) || m2 == 0.0) throw ContractError("residuals have zero variance");
  NormalityResult out;
  out.skewness = m3 / std::pow(m2, 1.5);
  out.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  out.normal = std::abs(out.skewness) < 0.2 && std::abs(out.excess_kurtosis) < 0.5;

  const double sd = std::sqrt(m2);
  const double span = 4.0;
  out.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    out.bin_edges[b] = -span + 2.0 * span * static_cast<double>(b) / static_cast<double>(bins);
  }
  out.counts.assign(bins, 0);
  for (double r : residuals) {
    const double z = (r - mean) / sd;
    // the outer bins collect the tails
    auto b = static_cast<std::ptrdiff_t>(std::floor((z + span) / (2.0 * span) * static_cast<double>(bins)));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++out.counts[static_cast<std::size_t>(b)];
  }
  return out;
}

std::string trajectory_csv(const PredictionReport& r) {
  auto os = csv_stream();
  os << "trajectory_id,kind,L1,L2,eps_ratio\n";
  for (const auto& row : r.rows) {
    os << row.trajectory_id << "," << to_string(row.kind) << "," << row.errors.l1 << ","
       << row.errors.l2 << "," << row.eps_ratio << "\n";
  }
  return os.str();
}

std::string summary_csv(const std::vector<PredictionReport>& reports) {
  auto os = csv_stream();
  os << "model,n,level,eval_seed,mean_L1,sd_L1,mean_L2,sd_L2,eps_ratio\n";
  for (const auto& r : reports) {
    os << r.model << "," << r.rows.size() << "," << r.level << "," << r.eval_seed << ","
       << r.mean_l1 << "," << r.sd_l1 << "," << r.mean_l2 << "," << r.sd_l2 << ","
       << r.mean_eps_ratio << "\n";
  }
  return os.str();
}

std::string band_csv(const TrajectoryReport& r, double level) {
  auto os = csv_stream();
  os << "y,mean,lower,upper,target\n";
  Interval ci;
  if (!r.std.empty()) ci = confidence_interval(r.mean, r.std, level);
  for (std::size_t i = 0; i < r.y.size(); ++i) {
    os << r.y[i] << "," << r.mean[i] << "," << (r.std.empty() ? r.mean[i] : ci.lower[i]) << ","
       << (r.std.empty() ? r.mean[i] : ci.upper[i]) << "," << r.targets[i] << "\n";
  }
  return os.str();
}

std::string chi_csv(std::span<const double> chis, std::span<const double> empirical) {
  same_length(chis.size(), empirical.size(), "chi_csv");
  auto os = csv_stream();
  os << "chi,empirical,analytic\n";
  for (std::size_t i = 0; i < chis.size(); ++i) {
    os << chis[i] << "," << empirical[i] << "," << chi_reference(chis[i]) << "\n";
  }
  return os.str();
}

std::string alarm_csv(const AlarmReport& r) {
  auto os = csv_stream();
  os << "trajectory_id,y_star,mean,lower,upper,truth,threshold,FN,FP_conservative,"
        "FP_nonconservative,TP,TN\n";
  for (const auto& o : r.outcomes) {
    os << o.trajectory_id << "," << r.y_star << "," << o.mean << "," << o.lower << "," << o.upper
       << "," << o.truth << "," << o.threshold << "," << o.fn << "," << o.fp_conservative << ","
       << o.fp_nonconservative << "," << o.tp << "," << o.tn << "\n";
  }
  return os.str();
}

std::string alarm_summary_csv(const std::vector<std::pair<std::string, AlarmReport>>& reports) {
  auto os = csv_stream();
  os << "model,n,FN,FP_conservative,FP_nonconservative,TP,TN,FN_rate,FP_conservative_rate,"
        "FP_nonconservative_rate\n";
  for (const auto& [name, r] : reports) {
    const auto& s = r.summary;
    os << name << "," << s.n << "," << s.fn << "," << s.fp_conservative << ","
       << s.fp_nonconservative << "," << s.tp << "," << s.tn << "," << s.fn_rate() << ","
       << s.fp_conservative_rate() << "," << s.fp_nonconservative_rate() << "\n";
  }
  return os.str();
}

std::string normality_csv(const NormalityResult& r) {
  auto os = csv_stream();
  os << "# skewness=" << r.skewness << " excess_kurtosis=" << r.excess_kurtosis
     << " normal=" << (r.normal ? "yes" : "no") << "\n";
  os << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < r.counts.size(); ++b) {
    os << r.bin_edges[b] << "," << r.bin_edges[b + 1] << "," << r.counts[b] << "\n";
  }
  return os.str();
}

}  // namespace postfault
