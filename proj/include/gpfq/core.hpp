#pragma once

// Greedy path-following quantization of a single neuron.
//
// For a neuron w in R^N, analog data X and quantized-path data X~ (both m x N),
// the iteration keeps the residual
//
//   u_0 = 0,   u_t = u_{t-1} + w_t X_t - q_t X~_t
//
// and picks q_t by quantizing  <X~_t, u_{t-1} + w_t X_t> / ||X~_t||^2 :
//   Plain: msq(arg)
//   Soft:  msq(soft_threshold(arg, lambda))
//   Hard:  msq_thresholded(hard_threshold(arg, lambda)) over a threshold alphabet
//
// so that sum_j q_j X~_j tracks sum_j w_j X_j. Neurons are independent.

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gpfq/alphabet.hpp"
#include "gpfq/matrix.hpp"

namespace gpfq {

enum class VariantKind { Plain, Soft, Hard };

const char* to_string(VariantKind kind) noexcept;
/// Accepts "plain", "soft", "hard". Throws InvalidSpec otherwise.
VariantKind parse_variant(const std::string& name);

struct Variant {
  VariantKind kind = VariantKind::Plain;
  double lambda = 0.0;  // ignored for Plain

  static Variant plain() noexcept { return {VariantKind::Plain, 0.0}; }
  static Variant soft(double lambda) noexcept { return {VariantKind::Soft, lambda}; }
  static Variant hard(double lambda) noexcept { return {VariantKind::Hard, lambda}; }
};

/// The per-step quantization rule: an alphabet paired with a thresholding variant.
class StepQuantizer {
 public:
  /// Plain or Soft over a midtread alphabet. Hard is rejected (InvalidSpec);
  /// it needs a ThresholdAlphabet.
  StepQuantizer(const Alphabet& alphabet, Variant variant);
  /// Hard thresholding over a threshold alphabet.
  explicit StepQuantizer(const ThresholdAlphabet& alphabet);

  /// Builds the rule for `variant` from a base midtread alphabet. Hard uses the
  /// threshold alphabet with the same delta and K; Hard with lambda = 0
  /// coincides with Plain and is returned as such.
  static StepQuantizer for_variant(const Alphabet& base, Variant variant);

  double operator()(double arg) const noexcept;

  VariantKind kind() const noexcept { return variant_.kind; }
  double lambda() const noexcept { return variant_.lambda; }
  double delta() const noexcept;
  int K() const noexcept;
  /// Largest level magnitude.
  double q_max() const noexcept;
  std::vector<double> levels() const;
  bool contains(double value) const noexcept;

  /// c in the per-step bound ||u_t||^2 - ||u_{t-1}||^2 <= c ||X_t||^2 - ...:
  /// delta^2/4 (Plain), (2 lambda + delta)^2/4 (Soft), max(2 lambda, delta)^2/4 (Hard).
  double step_error_coefficient() const noexcept;
  /// Range of the unquantized argument over which that bound applies:
  /// q_max for Plain and Hard, q_max + lambda for Soft.
  double active_range() const noexcept;

 private:
  std::variant<Alphabet, ThresholdAlphabet> alphabet_;
  Variant variant_;
};

/// Per-step data kept when NeuronOptions::record_steps is set.
struct StepRecord {
  double w = 0.0;
  double q = 0.0;
  double arg = 0.0;            // argument fed to the quantizer
  double x_sqnorm = 0.0;       // ||X_t||^2
  double inner_prev = 0.0;     // <X_t, u_{t-1}>
  double u_prev_sqnorm = 0.0;  // ||u_{t-1}||^2
  double u_sqnorm = 0.0;       // ||u_t||^2
  bool degenerate = false;     // ||X~_t|| == 0
};

struct NeuronTrace {
  std::vector<double> q;
  std::vector<double> residual;  // u_N
  double final_residual_sqnorm = 0.0;
  double max_residual_sqnorm = 0.0;
  std::size_t step_inequality_violations = 0;
  /// max over audited steps of (increment - bound) / ||X_t||^2; -inf if none audited.
  double max_step_violation = 0.0;
  std::size_t audited_steps = 0;
  std::size_t degenerate_columns = 0;
  /// ||w||_inf > q_max. The run is still well defined (msq clamps), but the
  /// per-step audit is skipped because its precondition fails.
  bool weight_exceeds_qmax = false;
  /// X and X~ were identical (the single-layer setting the audit applies to).
  bool identical_data = false;
  std::vector<StepRecord> steps;
};

struct NeuronOptions {
  bool record_steps = false;
  /// Run the per-step inequality audit. It only applies when X == X~.
  bool audit = true;
};

/// Column-major copies of X and X~ plus per-column norms, shared by all
/// neurons of a layer.
class LayerData {
 public:
  /// Throws ShapeMismatch unless X and X~ have the same shape.
  LayerData(const Matrix& analog, const Matrix& quantized);

  std::size_t samples() const noexcept { return m_; }
  std::size_t features() const noexcept { return n_; }
  bool identical() const noexcept { return identical_; }

  std::span<const double> analog_column(std::size_t t) const noexcept {
    return {analog_.data() + t * m_, m_};
  }
  std::span<const double> quantized_column(std::size_t t) const noexcept {
    return {quantized_.data() + t * m_, m_};
  }
  double analog_sqnorm(std::size_t t) const noexcept { return analog_sqnorm_[t]; }
  double quantized_sqnorm(std::size_t t) const noexcept { return quantized_sqnorm_[t]; }
  double cross(std::size_t t) const noexcept { return cross_[t]; }

 private:
  std::size_t m_ = 0;
  std::size_t n_ = 0;
  bool identical_ = false;
  std::vector<double> analog_;
  std::vector<double> quantized_;
  std::vector<double> analog_sqnorm_;
  std::vector<double> quantized_sqnorm_;
  std::vector<double> cross_;
};

struct StepOutcome {
  double q = 0.0;
  std::vector<double> u;
  bool degenerate = false;
};

/// One greedy step. A zero X~_t column is not an error: q_t is the
/// memoryless quantization of w_t and u_t = u_{t-1} + w_t X_t.
StepOutcome gpfq_step(std::span<const double> u_prev, double w_t, std::span<const double> x_t,
                      std::span<const double> x_tilde_t, const StepQuantizer& quantizer);

NeuronTrace gpfq_quantize_neuron(std::span<const double> w, const Matrix& X,
                                 const Matrix& X_tilde, const StepQuantizer& quantizer,
                                 const NeuronOptions& options = {});

NeuronTrace quantize_neuron(std::span<const double> w, const LayerData& data,
                            const StepQuantizer& quantizer, const NeuronOptions& options = {});

/// Enumerates levels and returns the minimizer of
///   1/2 ||u_prev + w_t X_t - p X~_t||^2 + lambda |p| ||X~_t||^2,
/// ties toward the larger level. Throws EmptyLevels on an empty list.
double argmin_objective_brute(std::span<const double> u_prev, double w_t,
                              std::span<const double> x_t, std::span<const double> x_tilde_t,
                              std::span<const double> levels, double lambda);

/// | ||u_N|| - ||X w - X~ q|| | / max(||X w||, eps), recomputed from scratch.
double residual_identity_check(const NeuronTrace& trace, std::span<const double> w,
                               const Matrix& X, const Matrix& X_tilde);

/// Right-hand side of the per-step increment bound for X == X~:
/// c ||X_t||^2 - <X_t,u>^2/||X_t||^2 if |w_t + <X_t,u>/||X_t||^2| <= active range, else 0.
double step_increment_bound(double w_t, double inner_prev, double x_sqnorm,
                            const StepQuantizer& quantizer) noexcept;

inline constexpr double kAuditSlack = 1e-9;

}  // namespace gpfq
