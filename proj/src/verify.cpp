#include "gpfq/verify.hpp"

#include <charconv>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "gpfq/error.hpp"
#include "gpfq/parallel.hpp"
#include "gpfq/rng.hpp"
#include "gpfq/tensor.hpp"

namespace gpfq {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// delta^2, (2 lambda + delta)^2 or max(2 lambda, delta)^2.
double squared_step(const StepQuantizer& quantizer) {
  return 4.0 * quantizer.step_error_coefficient();
}

double bounded_failure(double s2, std::size_t N0) {
  if (s2 >= 1.0) return 1.0;
  const double n = static_cast<double>(N0);
  return std::min(1.0, (2.0 + 1.0 / std::sqrt(1.0 - s2)) / (n * n));
}

double gaussian_failure(double m, double k, std::size_t N0, double p) {
  const double mk = m * k;
  const double inner = 1.0 - 5.0 / (18.0 * mk);
  const double tail = 1.0 + 6.0 * std::sqrt(mk / 5.0) * (1.0 / std::sqrt(inner) + 1.0);
  return std::min(1.0, std::pow(static_cast<double>(N0), -10.0 * p / 9.0) * tail);
}

double cluster_constant(const GaussianClusters& g) {
  double peak = 0.0;
  for (const auto& c : g.centers) {
    for (double z : c) peak = std::max(peak, std::abs(z));
  }
  return 1.0 + peak * peak / (g.sigma * g.sigma);
}

[[noreturn]] void unsupported(const DistributionModel& model) {
  throw Error(ErrorKind::UnsupportedRegime, "no error bound covers " + describe(model));
}

std::vector<double> relu(std::vector<double> v) {
  for (double& x : v) x = std::max(x, 0.0);
  return v;
}

}  // namespace

double theorem_bound(const DistributionModel& model, std::size_t N0, std::size_t m,
                     const StepQuantizer& quantizer, double exponent) {
  if (N0 == 0 || m == 0) throw Error(ErrorKind::InvalidSpec, "N0 and m must be >= 1");
  const double c2 = squared_step(quantizer);
  const double log_n = std::log(static_cast<double>(N0));
  const double md = static_cast<double>(m);
  return std::visit(
      overloaded{
          [&](const UniformBall& b) { return b.radius * b.radius * c2 * md * log_n; },
          [&](const SymmetricBernoulli&) { return md * md * c2 * log_n; },
          [&](const StandardNormal& s) {
            return 4.0 * exponent * md * md * c2 * s.sigma * s.sigma * log_n;
          },
          [&](const GaussianClusters& g) {
            const double k = cluster_constant(g);
            return 4.0 * exponent * md * md * k * k * c2 * g.sigma * g.sigma * log_n;
          },
          [&](const Subspace& s) -> double {
            if (!s.inner || std::holds_alternative<GaussianClusters>(s.inner->kind) ||
                std::holds_alternative<Subspace>(s.inner->kind)) {
              unsupported(model);
            }
            return theorem_bound(*s.inner, N0, s.dim, quantizer, exponent);
          },
      },
      model.kind);
}

double predicted_failure_probability(const DistributionModel& model, std::size_t N0,
                                     std::size_t m, double exponent) {
  if (N0 == 0 || m == 0) throw Error(ErrorKind::InvalidSpec, "N0 and m must be >= 1");
  const double md = static_cast<double>(m);
  return std::visit(
      overloaded{
          [&](const UniformBall&) { return bounded_failure(1.0 / md, N0); },
          [&](const SymmetricBernoulli&) { return bounded_failure(1.0 / md, N0); },
          [&](const StandardNormal&) { return gaussian_failure(md, 1.0, N0, exponent); },
          [&](const GaussianClusters& g) {
            return gaussian_failure(md, cluster_constant(g), N0, exponent);
          },
          [&](const Subspace& s) -> double {
            if (!s.inner || std::holds_alternative<GaussianClusters>(s.inner->kind) ||
                std::holds_alternative<Subspace>(s.inner->kind)) {
              unsupported(model);
            }
            return predicted_failure_probability(*s.inner, N0, s.dim, exponent);
          },
      },
      model.kind);
}

StepQuantizer trial_quantizer(const TrialConfig& config, std::span<const double> w) {
  double radius = config.radius;
  if (config.radius_from_weights) {
    radius = inf_norm(w);
    if (radius == 0.0) radius = config.radius;
  }
  const Alphabet base = build_midtread({config.bits, radius});
  Variant v = config.variant;
  if (config.lambda_in_steps) v.lambda *= base.delta();
  return StepQuantizer::for_variant(base, v);
}

TrialRecord run_bound_trial(const TrialConfig& config, std::uint64_t seed,
                            NeuronTrace* trace_out) {
  const std::vector<double> w = generic_weight(config.N0, config.radius, derive_seed(seed, {1}));
  const Matrix X = sample({config.model, config.m, config.N0, derive_seed(seed, {2})});
  const StepQuantizer quantizer = trial_quantizer(config, w);

  NeuronOptions options;
  options.record_steps = config.record_steps;
  NeuronTrace trace = gpfq_quantize_neuron(w, X, X, quantizer, options);

  const std::vector<double> xw = matvec(X, w);
  const std::vector<double> xq = matvec(X, trace.q);

  TrialRecord r;
  r.seed = seed;
  r.distribution = describe(config.model);
  r.m = config.m;
  r.N0 = config.N0;
  r.variant = quantizer.kind();
  r.delta = quantizer.delta();
  r.lambda = quantizer.lambda();
  r.abs_sq_error = squared_distance(xw, xq);
  const double signal = squared_norm(xw);
  r.rel_sq_error = signal > 0.0 ? r.abs_sq_error / signal : 0.0;
  r.bound_value = theorem_bound(config.model, config.N0, config.m, quantizer, config.exponent);
  r.bound_held = r.abs_sq_error <= r.bound_value;
  r.relu_sq_error = squared_distance(relu(xw), relu(xq));
  r.max_residual_sqnorm = trace.max_residual_sqnorm;
  r.max_step_violation = trace.audited_steps > 0 ? trace.max_step_violation : 0.0;
  r.step_violations = trace.step_inequality_violations;
  if (trace_out) *trace_out = std::move(trace);
  return r;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::InsufficientPoints, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw Error(ErrorKind::InsufficientPoints, "slope fit needs >= 2 paired points");
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) {
      throw Error(ErrorKind::InvalidSpec, "log-log fit needs positive values");
    }
    sx += std::log(xs[i]);
    sy += std::log(ys[i]);
  }
  const double mx = sx / n, my = sy / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw Error(ErrorKind::InsufficientPoints, "slope fit needs distinct x values");
  return sxy / sxx;
}

SweepResult sweep_width(const TrialConfig& base, const std::vector<std::size_t>& widths,
                        std::size_t trials, std::uint64_t master_seed) {
  const std::set<std::size_t> distinct(widths.begin(), widths.end());
  if (distinct.size() < 4 || *distinct.begin() == 0 ||
      *distinct.rbegin() < 16 * *distinct.begin()) {
    throw Error(ErrorKind::InsufficientPoints,
                "width sweep needs >= 4 distinct N0 values spanning >= 16x");
  }
  if (trials == 0) throw Error(ErrorKind::InsufficientPoints, "width sweep needs >= 1 trial");

  SweepResult out;
  out.records.resize(distinct.size() * trials);
  const std::vector<std::size_t> ns(distinct.begin(), distinct.end());
  parallel::parallel_for(out.records.size(), [&](std::size_t idx) {
    const std::size_t wi = idx / trials;
    TrialConfig cfg = base;
    cfg.N0 = ns[wi];
    out.records[idx] = run_bound_trial(cfg, derive_seed(master_seed, {ns[wi], idx % trials}));
  });
  for (std::size_t wi = 0; wi < ns.size(); ++wi) {
    std::vector<double> errs;
    errs.reserve(trials);
    for (std::size_t k = 0; k < trials; ++k) errs.push_back(out.records[wi * trials + k].rel_sq_error);
    out.xs.push_back(static_cast<double>(ns[wi]));
    out.medians.push_back(median(errs));
    out.q10.push_back(quantile(errs, 0.1));
    out.q90.push_back(quantile(errs, 0.9));
  }
  out.fitted_slope = fit_loglog_slope(out.xs, out.medians);
  return out;
}

AuditReport audit_step_inequalities(std::span<const NeuronTrace> traces,
                                    const StepQuantizer& quantizer) {
  const double d = quantizer.delta();
  const double l = quantizer.lambda();
  double c = 0.0;
  double range = quantizer.q_max();
  switch (quantizer.kind()) {
    case VariantKind::Plain: c = d * d / 4.0; break;
    case VariantKind::Soft:
      c = (2.0 * l + d) * (2.0 * l + d) / 4.0;
      range += l;
      break;
    case VariantKind::Hard: {
      const double e = std::max(2.0 * l, d);
      c = e * e / 4.0;
      break;
    }
  }

  AuditReport report;
  report.max_excess = -std::numeric_limits<double>::infinity();
  for (const NeuronTrace& trace : traces) {
    if (trace.steps.empty() || !trace.identical_data || trace.weight_exceeds_qmax) {
      ++report.skipped_traces;
      continue;
    }
    ++report.traces;
    for (const StepRecord& s : trace.steps) {
      if (s.degenerate || s.x_sqnorm == 0.0) continue;
      const double projection = s.inner_prev / s.x_sqnorm;
      const double bound = std::abs(s.w + projection) <= range
                               ? c * s.x_sqnorm - s.inner_prev * projection
                               : 0.0;
      const double excess = s.u_sqnorm - s.u_prev_sqnorm - bound;
      ++report.steps_checked;
      report.max_excess = std::max(report.max_excess, excess / s.x_sqnorm);
      if (excess > kAuditSlack * s.x_sqnorm) ++report.violations;
    }
  }
  if (report.steps_checked == 0) report.max_excess = 0.0;
  return report;
}

CnnTrialReport cnn_bound_trial(const CnnTrialConfig& config, std::uint64_t seed) {
  if (config.batch == 0 || config.blocks == 0 || config.in_channels == 0 || config.k1 == 0 ||
      config.k2 == 0 || config.out_channels == 0) {
    throw Error(ErrorKind::InvalidSpec, "cnn trial dimensions must be >= 1");
  }
  const std::size_t width = config.blocks * config.k2;
  Tensor images;
  images.shape = {config.batch, config.in_channels, config.k1, width};
  images.data.resize(element_count(images.shape));
  const std::size_t per_image = config.in_channels * config.k1 * width;
  for (std::size_t b = 0; b < config.batch; ++b) {
    Rng rng = Rng::stream(derive_seed(seed, {1}), {b});
    for (std::size_t i = 0; i < per_image; ++i) images.data[b * per_image + i] = rng.normal();
  }
  const Matrix X = unfold_conv_input(images, config.k1, config.k2, 1.0, derive_seed(seed, {2}));

  CnnTrialReport r;
  r.seed = seed;
  r.rows = X.rows();
  r.cols = X.cols();

  Matrix W(r.cols, config.out_channels);
  for (std::size_t k = 0; k < config.out_channels; ++k) {
    W.set_column(k, generic_weight(r.cols, config.radius, derive_seed(seed, {3, k})));
  }
  const Alphabet base = build_midtread({config.bits, config.radius});
  const StepQuantizer quantizer(base, Variant::plain());
  r.delta = quantizer.delta();
  const DenseQuantization dq = quantize_dense_layer(W, X, X, quantizer);

  const Matrix XW = matmul(X, W);
  const Matrix XQ = matmul(X, dq.Q);
  r.kernel_sq_errors.assign(config.out_channels, 0.0);
  for (std::size_t i = 0; i < r.rows; ++i) {
    for (std::size_t k = 0; k < config.out_channels; ++k) {
      const double e = XW(i, k) - XQ(i, k);
      r.kernel_sq_errors[k] += e * e;
    }
  }
  r.max_sq_error = *std::max_element(r.kernel_sq_errors.begin(), r.kernel_sq_errors.end());

  const DistributionModel normal{StandardNormal{1.0}};
  r.bound_value = theorem_bound(normal, r.cols, r.rows, quantizer, config.exponent);
  r.bound_held = r.max_sq_error <= r.bound_value;
  r.predicted_failure =
      std::min(1.0, static_cast<double>(config.out_channels) *
                        predicted_failure_probability(normal, r.cols, r.rows, config.exponent));

  double sum = 0.0, sum_sq = 0.0;
  for (double x : X.storage()) {
    sum += x;
    sum_sq += x * x;
  }
  const double n = static_cast<double>(X.storage().size());
  r.pooled_mean = sum / n;
  r.pooled_variance = (sum_sq - n * r.pooled_mean * r.pooled_mean) / (n - 1.0);
  return r;
}

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trial_csv_header() {
  return std::string("# ") + kTrialCsvVersion +
         "\nseed,distribution,m,N0,variant,delta,lambda,rel_sq_error,abs_sq_error,bound_value,"
         "bound_held,relu_sq_error,max_residual_sqnorm,max_step_violation,step_violations\n";
}

std::string to_csv_row(const TrialRecord& r) {
  std::ostringstream os;
  os << r.seed << ',' << r.distribution << ',' << r.m << ',' << r.N0 << ',' << to_string(r.variant)
     << ',' << format_double(r.delta) << ',' << format_double(r.lambda) << ','
     << format_double(r.rel_sq_error) << ',' << format_double(r.abs_sq_error) << ','
     << format_double(r.bound_value) << ',' << (r.bound_held ? 1 : 0) << ','
     << format_double(r.relu_sq_error) << ',' << format_double(r.max_residual_sqnorm) << ','
     << format_double(r.max_step_violation) << ',' << r.step_violations << '\n';
  return os.str();
}

std::string to_csv(std::span<const TrialRecord> records) {
  std::string out = trial_csv_header();
  for (const TrialRecord& r : records) out += to_csv_row(r);
  return out;
}

}  // namespace gpfq
