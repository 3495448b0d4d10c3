#pragma once

// Monte Carlo checks of the single-layer error bounds.
//
// Bounds are on ||Xw - Xq||_2^2 with X = X~ (one layer). Writing c^2 for
// delta^2 (Plain), (2 lambda + delta)^2 (Soft) or max(2 lambda, delta)^2 (Hard):
//
//   bounded columns, ||X_t|| <= r, s^2 = 1/m:   r^2 c^2 / s^2 * log N0
//       failure probability <= (2 + 1/sqrt(1 - s^2)) / N0^2
//   Gaussian clusters (normal data: k = 1):      4 p m^2 k^2 c^2 sigma^2 log N0
//       failure probability <= N0^(-10p/9) (1 + 6 sqrt(mk/5) ((1 - 5/(18mk))^(-1/2) + 1))
//         with k = 1 + max_i ||z_i||_inf^2 / sigma^2
//
// For data in an l-dimensional subspace, m is replaced by l.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gpfq/core.hpp"
#include "gpfq/datagen.hpp"
#include "gpfq/layers.hpp"

namespace gpfq {

struct TrialConfig {
  DistributionModel model{StandardNormal{1.0}};
  std::size_t m = 16;
  std::size_t N0 = 1024;
  int bits = 5;
  /// Weights are drawn from Uniform(-radius, radius); the base alphabet has
  /// q_max = radius unless radius_from_weights is set, in which case q_max = ||w||_inf.
  double radius = 1.0;
  bool radius_from_weights = false;
  Variant variant = Variant::plain();
  /// Interpret variant.lambda as a multiple of delta.
  bool lambda_in_steps = true;
  /// p in the Gaussian-regime bound.
  double exponent = 1.0;
  bool record_steps = false;
};

struct TrialRecord {
  std::uint64_t seed = 0;
  std::string distribution;
  std::size_t m = 0;
  std::size_t N0 = 0;
  VariantKind variant = VariantKind::Plain;
  double delta = 0.0;
  double lambda = 0.0;
  double rel_sq_error = 0.0;  // ||Xw - Xq||^2 / ||Xw||^2
  double abs_sq_error = 0.0;  // ||Xw - Xq||^2
  double bound_value = 0.0;
  bool bound_held = false;
  double relu_sq_error = 0.0;  // ||relu(Xw) - relu(Xq)||^2
  double max_residual_sqnorm = 0.0;
  double max_step_violation = 0.0;
  std::size_t step_violations = 0;
};

struct SweepResult {
  std::vector<double> xs;
  std::vector<double> medians;
  std::vector<double> q10;
  std::vector<double> q90;
  double fitted_slope = 0.0;
  std::vector<TrialRecord> records;
};

/// Bound on ||Xw - Xq||^2 for the regime of `model`. Throws UnsupportedRegime
/// for a subspace over Gaussian clusters.
double theorem_bound(const DistributionModel& model, std::size_t N0, std::size_t m,
                     const StepQuantizer& quantizer, double exponent = 1.0);

/// Failure probability the matching bound guarantees, capped at 1.
double predicted_failure_probability(const DistributionModel& model, std::size_t N0,
                                     std::size_t m, double exponent = 1.0);

/// Quantizer a trial uses for weights w.
StepQuantizer trial_quantizer(const TrialConfig& config, std::span<const double> w);

TrialRecord run_bound_trial(const TrialConfig& config, std::uint64_t seed,
                            NeuronTrace* trace_out = nullptr);

/// Runs `trials` trials per width (seeds derived from master_seed, width and
/// trial index) and fits the slope of log(median rel error) against log N0.
/// Throws InsufficientPoints unless there are >= 4 distinct widths spanning >= 16x.
SweepResult sweep_width(const TrialConfig& base, const std::vector<std::size_t>& widths,
                        std::size_t trials, std::uint64_t master_seed);

/// Least-squares slope of log(ys) on log(xs).
double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys);
/// Linear-interpolated quantile of an unsorted sample.
double quantile(std::vector<double> values, double q);
double median(std::vector<double> values);

struct AuditReport {
  std::size_t traces = 0;
  std::size_t skipped_traces = 0;
  std::size_t steps_checked = 0;
  std::size_t violations = 0;
  double max_excess = 0.0;  // max over steps of (increment - bound) / ||X_t||^2
};

/// Recomputes the per-step increment bound from recorded steps. Traces
/// without recorded steps, with X != X~, or with ||w||_inf > q_max are skipped.
AuditReport audit_step_inequalities(std::span<const NeuronTrace> traces,
                                    const StepQuantizer& quantizer);

struct CnnTrialConfig {
  std::size_t batch = 4;
  std::size_t blocks = 16;  // T, disjoint blocks kept per image
  std::size_t in_channels = 8;
  std::size_t k1 = 3;
  std::size_t k2 = 3;
  std::size_t out_channels = 16;
  int bits = 4;
  double radius = 1.0;
  double exponent = 1.0;
};

struct CnnTrialReport {
  std::uint64_t seed = 0;
  std::size_t rows = 0;  // B T
  std::size_t cols = 0;  // C_in k1 k2
  double delta = 0.0;
  std::vector<double> kernel_sq_errors;
  double max_sq_error = 0.0;
  double bound_value = 0.0;
  bool bound_held = false;
  /// Union bound over kernels, capped at 1.
  double predicted_failure = 0.0;
  double pooled_mean = 0.0;
  double pooled_variance = 0.0;
};

/// Images are B x C_in x k1 x (T k2) with i.i.d. N(0,1) entries, so every
/// image holds exactly T disjoint blocks.
CnnTrialReport cnn_bound_trial(const CnnTrialConfig& config, std::uint64_t seed);

/// Versioned CSV for trial records. Columns never move within a version.
inline constexpr const char* kTrialCsvVersion = "gpfq-trials/1";
std::string trial_csv_header();
std::string to_csv_row(const TrialRecord& record);
std::string to_csv(std::span<const TrialRecord> records);

/// Shortest decimal rendering that reads back to the same double.
std::string format_double(double v);

}  // namespace gpfq
