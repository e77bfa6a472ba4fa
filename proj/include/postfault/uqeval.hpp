#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "postfault/gridsim.hpp"

namespace postfault {

struct RelativeErrors {
  double l1 = 0.0;  // percent
  double l2 = 0.0;  // percent
};

RelativeErrors relative_errors(std::span<const double> pred, std::span<const double> target);

/// Phi^{-1}(p) for p in (0, 1): Acklam's rational approximation polished by
/// one Halley step, good to well below 1e-9.
double inverse_normal_cdf(double p);
/// Two-sided Gaussian multiplier: Phi^{-1}((1 + level) / 2).
double z_value(double level);

struct Interval {
  std::vector<double> lower;
  std::vector<double> upper;
};

Interval confidence_interval(std::span<const double> mean, std::span<const double> std,
                             double level = 0.95);

/// Percentage of targets inside [lower, upper].
double epsilon_ratio(const Interval& ci, std::span<const double> targets);

/// Prediction of one test trajectory on the mesh.
struct TrajectoryReport {
  std::size_t trajectory_id = 0;
  FaultKind kind = FaultKind::N1;
  std::vector<double> y;
  std::vector<double> mean;
  std::vector<double> std;  // empty for point predictors
  std::vector<double> targets;
  RelativeErrors errors;
  double eps_ratio = 0.0;  // NaN without std
};

/// Fills errors and eps_ratio from the curves.
void score(TrajectoryReport& r, double level);

struct PredictionReport {
  std::string model;
  double level = 0.95;
  std::uint64_t eval_seed = 0;
  std::vector<TrajectoryReport> rows;
  double mean_l1 = 0.0, sd_l1 = 0.0;
  double mean_l2 = 0.0, sd_l2 = 0.0;
  double mean_eps_ratio = 0.0;  // NaN for point predictors
};

PredictionReport summarize(std::string model, std::vector<TrajectoryReport> rows, double level,
                           std::uint64_t eval_seed);

/// k indices out of n, uniformly without replacement, sorted.
std::vector<std::size_t> select_subset(std::size_t n, std::size_t k, std::uint64_t seed);

/// Fraction of (trajectory, mesh point) pairs with |mean - target| <= chi * std.
std::vector<double> chi_coverage_curve(const std::vector<TrajectoryReport>& rows,
                                       std::span<const double> chis);
/// P(|N(0,1)| <= chi).
double chi_reference(double chi);

/// Piecewise threshold: `early` on (t_cl, t_cl + window], `late` after.
struct UnderVoltageProfile {
  double t_cl = 2.0;
  double window = 0.5;
  double early = 0.70;
  double late = 0.90;

  double threshold(double t) const;
};

struct AlarmOutcome {
  std::size_t trajectory_id = 0;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double truth = 0.0;
  double threshold = 0.0;
  bool fn = false;
  bool fp_conservative = false;
  bool fp_nonconservative = false;
  bool tp = false;
  bool tn = false;
};

/// A violation is a value below the threshold. FN: truth violates but the
/// whole CI sits above. FP (truth fine): conservative when the CI reaches
/// below, non-conservative when all of it does.
AlarmOutcome classify_alarm(double mean, double lower, double upper, double truth, double threshold);

struct AlarmSummary {
  std::size_t n = 0;
  std::size_t fn = 0, fp_conservative = 0, fp_nonconservative = 0, tp = 0, tn = 0;
  double fn_rate() const;
  double fp_conservative_rate() const;
  double fp_nonconservative_rate() const;
};

struct AlarmReport {
  double y_star = 2.2;
  std::vector<AlarmOutcome> outcomes;
  AlarmSummary summary;
};

AlarmReport alarm_analysis(const std::vector<TrajectoryReport>& rows,
                           const UnderVoltageProfile& profile, double y_star, double level);

struct NormalityResult {
  std::vector<double> bin_edges;  // standardized units
  std::vector<std::size_t> counts;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  bool normal = false;
};

/// Needs at least 1000 residuals with non-zero spread.
NormalityResult residual_normality(std::span<const double> residuals, std::size_t bins = 40);

// CSV writers.
std::string trajectory_csv(const PredictionReport& r);
std::string summary_csv(const std::vector<PredictionReport>& reports);
std::string band_csv(const TrajectoryReport& r, double level);
std::string chi_csv(std::span<const double> chis, std::span<const double> empirical);
std::string alarm_csv(const AlarmReport& r);
std::string alarm_summary_csv(const std::vector<std::pair<std::string, AlarmReport>>& reports);
std::string normality_csv(const NormalityResult& r);

}  // namespace postfault
