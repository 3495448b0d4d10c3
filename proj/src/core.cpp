#include "gpfq/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gpfq/error.hpp"

namespace gpfq {

const char* to_string(VariantKind kind) noexcept {
  switch (kind) {
    case VariantKind::Plain: return "plain";
    case VariantKind::Soft: return "soft";
    case VariantKind::Hard: return "hard";
  }
  return "unknown";
}

VariantKind parse_variant(const std::string& name) {
  if (name == "plain") return VariantKind::Plain;
  if (name == "soft") return VariantKind::Soft;
  if (name == "hard") return VariantKind::Hard;
  throw Error(ErrorKind::InvalidSpec, "unknown variant '" + name + "'");
}

StepQuantizer::StepQuantizer(const Alphabet& alphabet, Variant variant)
    : alphabet_(alphabet), variant_(variant) {
  if (variant.kind == VariantKind::Hard) {
    throw Error(ErrorKind::InvalidSpec, "hard thresholding requires a threshold alphabet");
  }
  if (variant.kind == VariantKind::Plain) variant_.lambda = 0.0;
  if (!(variant_.lambda >= 0.0) || !std::isfinite(variant_.lambda)) {
    throw Error(ErrorKind::InvalidSpec, "lambda must be finite and >= 0");
  }
}

StepQuantizer::StepQuantizer(const ThresholdAlphabet& alphabet)
    : alphabet_(alphabet), variant_(Variant::hard(alphabet.lambda())) {}

StepQuantizer StepQuantizer::for_variant(const Alphabet& base, Variant variant) {
  if (variant.kind == VariantKind::Hard) {
    if (variant.lambda == 0.0) return StepQuantizer(base, Variant::plain());
    return StepQuantizer(ThresholdAlphabet(base.delta(), base.K(), variant.lambda));
  }
  return StepQuantizer(base, variant);
}

double StepQuantizer::operator()(double arg) const noexcept {
  switch (variant_.kind) {
    case VariantKind::Plain: return msq(arg, std::get<Alphabet>(alphabet_));
    case VariantKind::Soft:
      return msq(soft_threshold(arg, variant_.lambda), std::get<Alphabet>(alphabet_));
    case VariantKind::Hard:
      return msq_thresholded(hard_threshold(arg, variant_.lambda),
                             std::get<ThresholdAlphabet>(alphabet_));
  }
  return 0.0;
}

double StepQuantizer::delta() const noexcept {
  return std::visit([](const auto& a) { return a.delta(); }, alphabet_);
}

int StepQuantizer::K() const noexcept {
  return std::visit([](const auto& a) { return a.K(); }, alphabet_);
}

double StepQuantizer::q_max() const noexcept {
  return std::visit([](const auto& a) { return a.q_max(); }, alphabet_);
}

std::vector<double> StepQuantizer::levels() const {
  return std::visit([](const auto& a) { return a.levels(); }, alphabet_);
}

bool StepQuantizer::contains(double value) const noexcept {
  return std::visit([value](const auto& a) { return a.contains(value); }, alphabet_);
}

double StepQuantizer::step_error_coefficient() const noexcept {
  const double d = delta();
  const double l = variant_.lambda;
  switch (variant_.kind) {
    case VariantKind::Plain: return d * d / 4.0;
    case VariantKind::Soft: return (2.0 * l + d) * (2.0 * l + d) / 4.0;
    case VariantKind::Hard: {
      const double c = std::max(2.0 * l, d);
      return c * c / 4.0;
    }
  }
  return 0.0;
}

double StepQuantizer::active_range() const noexcept {
  return variant_.kind == VariantKind::Soft ? q_max() + variant_.lambda : q_max();
}

LayerData::LayerData(const Matrix& analog, const Matrix& quantized)
    : m_(analog.rows()), n_(analog.cols()) {
  if (analog.rows() != quantized.rows() || analog.cols() != quantized.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "X is " + std::to_string(analog.rows()) + "x" +
                                              std::to_string(analog.cols()) + " but X~ is " +
                                              std::to_string(quantized.rows()) + "x" +
                                              std::to_string(quantized.cols()));
  }
  identical_ = (&analog == &quantized) || analog.storage() == quantized.storage();
  analog_ = analog.transposed().storage();
  quantized_ = identical_ ? analog_ : quantized.transposed().storage();
  analog_sqnorm_.resize(n_);
  quantized_sqnorm_.resize(n_);
  cross_.resize(n_);
  for (std::size_t t = 0; t < n_; ++t) {
    analog_sqnorm_[t] = squared_norm(analog_column(t));
    quantized_sqnorm_[t] = squared_norm(quantized_column(t));
    cross_[t] = dot(quantized_column(t), analog_column(t));
  }
}

StepOutcome gpfq_step(std::span<const double> u_prev, double w_t, std::span<const double> x_t,
                      std::span<const double> x_tilde_t, const StepQuantizer& quantizer) {
  if (u_prev.size() != x_t.size() || x_t.size() != x_tilde_t.size()) {
    throw Error(ErrorKind::ShapeMismatch, "gpfq_step vector lengths differ");
  }
  StepOutcome out;
  const double norm_sq = squared_norm(x_tilde_t);
  if (norm_sq == 0.0) {
    out.degenerate = true;
    out.q = quantizer(w_t);
  } else {
    const double arg = (dot(x_tilde_t, u_prev) + w_t * dot(x_tilde_t, x_t)) / norm_sq;
    out.q = quantizer(arg);
  }
  out.u.assign(u_prev.begin(), u_prev.end());
  axpy(w_t, x_t, out.u);
  axpy(-out.q, x_tilde_t, out.u);
  return out;
}

double step_increment_bound(double w_t, double inner_prev, double x_sqnorm,
                            const StepQuantizer& quantizer) noexcept {
  const double z = w_t + inner_prev / x_sqnorm;
  if (std::abs(z) > quantizer.active_range()) return 0.0;
  return quantizer.step_error_coefficient() * x_sqnorm - inner_prev * inner_prev / x_sqnorm;
}

NeuronTrace quantize_neuron(std::span<const double> w, const LayerData& data,
                            const StepQuantizer& quantizer, const NeuronOptions& options) {
  const std::size_t n = data.features();
  const std::size_t m = data.samples();
  if (w.size() != n) {
    throw Error(ErrorKind::ShapeMismatch, "neuron has " + std::to_string(w.size()) +
                                              " weights but data has " + std::to_string(n) +
                                              " columns");
  }
  NeuronTrace trace;
  trace.q.resize(n);
  trace.residual.assign(m, 0.0);
  trace.weight_exceeds_qmax = inf_norm(w) > quantizer.q_max();
  trace.identical_data = data.identical();
  trace.max_step_violation = -std::numeric_limits<double>::infinity();
  if (options.record_steps) trace.steps.reserve(n);

  const bool audit = options.audit && data.identical() && !trace.weight_exceeds_qmax;
  std::vector<double>& u = trace.residual;
  double u_sqnorm = 0.0;

  for (std::size_t t = 0; t < n; ++t) {
    const auto x = data.analog_column(t);
    const auto xt = data.quantized_column(t);
    const double xt_sq = data.quantized_sqnorm(t);
    const double w_t = w[t];
    const double u_prev_sqnorm = u_sqnorm;
    const double inner_tilde = dot(xt, u);

    double arg = w_t;
    double q = 0.0;
    const bool degenerate = xt_sq == 0.0;
    if (degenerate) {
      q = quantizer(w_t);
      ++trace.degenerate_columns;
    } else {
      arg = (inner_tilde + w_t * data.cross(t)) / xt_sq;
      q = quantizer(arg);
    }
    trace.q[t] = q;

    double inner_prev = inner_tilde;
    if (!data.identical() && options.record_steps) inner_prev = dot(x, u);

    axpy(w_t, x, u);
    axpy(-q, xt, u);
    u_sqnorm = squared_norm(u);
    trace.max_residual_sqnorm = std::max(trace.max_residual_sqnorm, u_sqnorm);

    if (audit && !degenerate) {
      const double increment = u_sqnorm - u_prev_sqnorm;
      const double bound = step_increment_bound(w_t, inner_tilde, xt_sq, quantizer);
      ++trace.audited_steps;
      trace.max_step_violation = std::max(trace.max_step_violation, (increment - bound) / xt_sq);
      if (increment - bound > kAuditSlack * xt_sq) ++trace.step_inequality_violations;
    }

    if (options.record_steps) {
      trace.steps.push_back(StepRecord{w_t, q, arg, data.analog_sqnorm(t), inner_prev,
                                       u_prev_sqnorm, u_sqnorm, degenerate});
    }
  }
  trace.final_residual_sqnorm = u_sqnorm;
  return trace;
}

NeuronTrace gpfq_quantize_neuron(std::span<const double> w, const Matrix& X,
                                 const Matrix& X_tilde, const StepQuantizer& quantizer,
                                 const NeuronOptions& options) {
  const LayerData data(X, X_tilde);
  return quantize_neuron(w, data, quantizer, options);
}

double argmin_objective_brute(std::span<const double> u_prev, double w_t,
                              std::span<const double> x_t, std::span<const double> x_tilde_t,
                              std::span<const double> levels, double lambda) {
  if (levels.empty()) throw Error(ErrorKind::EmptyLevels, "no levels to search");
  const std::size_t m = u_prev.size();
  const double xt_sq = squared_norm(x_tilde_t);
  double best = 0.0;
  double best_value = std::numeric_limits<double>::infinity();
  for (double p : levels) {
    double sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = u_prev[i] + w_t * x_t[i] - p * x_tilde_t[i];
      sq += r * r;
    }
    const double value = 0.5 * sq + lambda * std::abs(p) * xt_sq;
    if (value < best_value || (value == best_value && p > best)) {
      best = p;
      best_value = value;
    }
  }
  return best;
}

double residual_identity_check(const NeuronTrace& trace, std::span<const double> w,
                               const Matrix& X, const Matrix& X_tilde) {
  const std::vector<double> xw = matvec(X, w);
  const std::vector<double> xq = matvec(X_tilde, trace.q);
  double diff = 0.0;
  for (std::size_t i = 0; i < xw.size(); ++i) {
    const double d = xw[i] - xq[i];
    diff += d * d;
  }
  const double gap = std::abs(std::sqrt(trace.final_residual_sqnorm) - std::sqrt(diff));
  const double scale = std::max(std::sqrt(squared_norm(xw)), 1e-300);
  return gap / scale;
}

}  // namespace gpfq
