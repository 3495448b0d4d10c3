#include "gpfq/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "gpfq/error.hpp"
#include "gpfq/parallel.hpp"
#include "gpfq/rng.hpp"
#include "gpfq/synthetic.hpp"
#include "gpfq/verify.hpp"

namespace gpfq {
namespace {

using parallel::parallel_for;

struct Outcome {
  bool passed = false;
  std::string detail;
  std::string csv;
};

std::string fmt(double v) { return format_double(v); }

std::string short_fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

/// Upper limit for an observed failure fraction: p + 3 sqrt(p (1 - p) / n).
double binomial_limit(double p, std::size_t n) {
  return p + 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

std::vector<double> normal_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

Matrix normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.storage()) x = scale * rng.normal();
  return m;
}

double objective(std::span<const double> u, double w, std::span<const double> x,
                 std::span<const double> xt, double p, double lambda) {
  double sq = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double r = u[i] + w * x[i] - p * xt[i];
    sq += r * r;
  }
  return 0.5 * sq + lambda * std::abs(p) * squared_norm(xt);
}

// 1: closed-form step vs enumeration of the alphabet.
Outcome closed_form(std::uint64_t seed) {
  constexpr std::size_t kInstances = 20000;
  struct Row {
    VariantKind kind;
    std::size_t m;
    int K;
    double delta, lambda, q_step, q_brute;
    bool tie;
  };
  std::vector<Row> rows(kInstances);
  parallel_for(kInstances, [&](std::size_t i) {
    Rng rng = Rng::stream(seed, {i});
    const std::size_t m = 1 + static_cast<std::size_t>(rng.next() % 8);
    const int K = 1 + static_cast<int>(rng.next() % 8);
    const double delta = rng.uniform(0.05, 1.0);
    const bool soft = i % 2 == 1;
    const double lambda = soft ? rng.uniform(0.0, delta) : 0.0;
    const Alphabet alphabet(delta, K);
    const StepQuantizer quantizer(alphabet, soft ? Variant::soft(lambda) : Variant::plain());

    const std::vector<double> u = normal_vector(rng, m);
    const std::vector<double> x = normal_vector(rng, m);
    std::vector<double> xt = x;
    if (i % 4 >= 2) {
      for (double& v : xt) v += 0.3 * rng.normal();
    }
    const double w = rng.uniform(-1.5, 1.5) * alphabet.q_max();

    const double q_step = gpfq_step(u, w, x, xt, quantizer).q;
    const std::vector<double> levels = alphabet.levels();
    const double q_brute = argmin_objective_brute(u, w, x, xt, levels, lambda);

    // A tie is two levels whose objectives agree to rounding; either answer is right there.
    std::vector<double> values;
    values.reserve(levels.size());
    for (double p : levels) values.push_back(objective(u, w, x, xt, p, lambda));
    std::sort(values.begin(), values.end());
    const bool tie = values.size() > 1 &&
                     values[1] - values[0] <= 1e-9 * std::max(1.0, std::abs(values[0]));
    rows[i] = Row{quantizer.kind(), m, K, delta, lambda, q_step, q_brute, tie};
  });

  std::size_t mismatches = 0, ties = 0;
  std::string csv = "instance,variant,m,K,delta,lambda,q_step,q_brute,tie\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    if (r.tie) {
      ++ties;
    } else if (r.q_step != r.q_brute) {
      ++mismatches;
    }
    csv += std::to_string(i) + ',' + to_string(r.kind) + ',' + std::to_string(r.m) + ',' +
           std::to_string(r.K) + ',' + fmt(r.delta) + ',' + fmt(r.lambda) + ',' + fmt(r.q_step) +
           ',' + fmt(r.q_brute) + ',' + (r.tie ? "1" : "0") + '\n';
  }
  return {mismatches == 0,
          std::to_string(kInstances) + " instances, " + std::to_string(ties) +
              " ties skipped, " + std::to_string(mismatches) + " mismatches",
          csv};
}

// 2: ||u_N|| against ||Xw - X~q|| recomputed from scratch.
Outcome telescoping(std::uint64_t seed) {
  constexpr std::size_t kRuns = 1000;
  std::vector<double> gaps(kRuns);
  parallel_for(kRuns, [&](std::size_t i) {
    Rng rng = Rng::stream(seed, {i});
    const std::size_t m = 2 + static_cast<std::size_t>(rng.next() % 31);
    const std::size_t n = 1 + static_cast<std::size_t>(rng.next() % 256);
    const Matrix X = normal_matrix(rng, m, n);
    Matrix Xt = X;
    if (i % 2 == 1) {
      for (double& v : Xt.storage()) v += 0.1 * rng.normal();
    }
    const std::vector<double> w = generic_weight(n, 1.0, derive_seed(seed, {i, 1}));
    const Alphabet base = build_midtread({2 + static_cast<int>(rng.next() % 5), 1.0});
    const VariantKind kind = static_cast<VariantKind>(i % 3);
    const StepQuantizer quantizer =
        StepQuantizer::for_variant(base, Variant{kind, 0.5 * base.delta()});
    const NeuronTrace trace = gpfq_quantize_neuron(w, X, Xt, quantizer);
    gaps[i] = residual_identity_check(trace, w, X, Xt);
  });
  const double worst = *std::max_element(gaps.begin(), gaps.end());
  std::string csv = "run,relative_gap\n";
  for (std::size_t i = 0; i < gaps.size(); ++i) csv += std::to_string(i) + ',' + fmt(gaps[i]) + '\n';
  return {worst <= 1e-10, "max relative gap " + short_fmt(worst) + " (limit 1e-10)", csv};
}

std::string sweep_csv(const SweepResult& r) {
  std::string csv = "N0,median_rel_sq_error,q10,q90\n";
  for (std::size_t i = 0; i < r.xs.size(); ++i) {
    csv += fmt(r.xs[i]) + ',' + fmt(r.medians[i]) + ',' + fmt(r.q10[i]) + ',' + fmt(r.q90[i]) + '\n';
  }
  csv += "fitted_slope," + fmt(r.fitted_slope) + ",,\n";
  return csv;
}

// 3: slope of median relative error against N0.
Outcome decay_law(std::uint64_t seed) {
  TrialConfig cfg;
  cfg.model = DistributionModel{StandardNormal{1.0}};
  cfg.m = 16;
  cfg.bits = 5;
  cfg.radius = 1.0;
  cfg.radius_from_weights = true;
  const SweepResult r = sweep_width(cfg, {64, 128, 256, 512, 1024, 2048, 4096}, 50, seed);
  const bool ok = r.fitted_slope >= -1.25 && r.fitted_slope <= -0.75;
  return {ok, "fitted slope " + short_fmt(r.fitted_slope) + " (want [-1.25, -0.75])",
          sweep_csv(r) + to_csv(r.records)};
}

// 4: frequency of absolute bound failures.
Outcome bound_frequency(std::uint64_t seed) {
  struct Case {
    const char* label;
    DistributionModel model;
    Variant variant;  // lambda in units of delta
  };
  const std::vector<Case> cases = {
      {"ball/plain", {UniformBall{1.0}}, Variant::plain()},
      {"ball/soft", {UniformBall{1.0}}, Variant::soft(0.5)},
      {"ball/hard", {UniformBall{1.0}}, Variant::hard(0.5)},
      {"normal/plain", {StandardNormal{1.0}}, Variant::plain()},
      {"normal/soft", {StandardNormal{1.0}}, Variant::soft(0.5)},
      {"normal/hard", {StandardNormal{1.0}}, Variant::hard(0.5)},
  };
  constexpr std::size_t kSeeds = 200;
  bool ok = true;
  std::string detail;
  std::vector<TrialRecord> all;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    TrialConfig cfg;
    cfg.model = cases[c].model;
    cfg.m = 4;
    cfg.N0 = 1024;
    cfg.bits = 4;
    cfg.radius = 1.0;
    cfg.variant = cases[c].variant;
    cfg.exponent = 1.0;
    std::vector<TrialRecord> records(kSeeds);
    parallel_for(kSeeds, [&](std::size_t k) {
      records[k] = run_bound_trial(cfg, derive_seed(seed, {c, k}));
    });
    const auto failures = static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const TrialRecord& r) { return !r.bound_held; }));
    const double predicted = predicted_failure_probability(cfg.model, cfg.N0, cfg.m, cfg.exponent);
    const double limit = binomial_limit(predicted, kSeeds);
    const double fraction = static_cast<double>(failures) / kSeeds;
    ok = ok && fraction <= limit;
    if (!detail.empty()) detail += "; ";
    detail += std::string(cases[c].label) + " " + std::to_string(failures) + "/" +
              std::to_string(kSeeds) + " (limit " + short_fmt(limit) + ")";
    all.insert(all.end(), records.begin(), records.end());
  }
  return {ok, detail, to_csv(all)};
}

// 5: per-step increment audits.
Outcome step_audits(std::uint64_t seed) {
  constexpr std::size_t kTraces = 1000;
  const std::vector<DistributionModel> models = {
      {StandardNormal{1.0}}, {UniformBall{1.0}}, {SymmetricBernoulli{}}};
  const std::vector<Variant> variants = {Variant::plain(), Variant::soft(0.75),
                                         Variant::hard(0.75)};
  bool ok = true;
  std::string detail;
  std::string csv = "variant,traces,skipped,steps,violations,max_excess\n";
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<AuditReport> reports(kTraces);
    parallel_for(kTraces, [&](std::size_t k) {
      TrialConfig cfg;
      cfg.model = models[k % models.size()];
      cfg.m = 8;
      cfg.N0 = 128;
      cfg.bits = 3 + static_cast<int>(k % 3);
      cfg.variant = variants[v];
      cfg.record_steps = true;
      NeuronTrace trace;
      const std::uint64_t s = derive_seed(seed, {v, k});
      run_bound_trial(cfg, s, &trace);
      const std::vector<double> w = generic_weight(cfg.N0, cfg.radius, derive_seed(s, {1}));
      reports[k] = audit_step_inequalities(std::span<const NeuronTrace>(&trace, 1),
                                           trial_quantizer(cfg, w));
    });
    AuditReport total;
    total.max_excess = -std::numeric_limits<double>::infinity();
    for (const AuditReport& r : reports) {
      total.traces += r.traces;
      total.skipped_traces += r.skipped_traces;
      total.steps_checked += r.steps_checked;
      total.violations += r.violations;
      if (r.steps_checked > 0) total.max_excess = std::max(total.max_excess, r.max_excess);
    }
    ok = ok && total.violations == 0 && total.traces == kTraces;
    const char* name = to_string(variants[v].kind);
    if (!detail.empty()) detail += "; ";
    detail += std::string(name) + " " + std::to_string(total.violations) + " violations in " +
              std::to_string(total.steps_checked) + " steps";
    csv += std::string(name) + ',' + std::to_string(total.traces) + ',' +
           std::to_string(total.skipped_traces) + ',' + std::to_string(total.steps_checked) + ',' +
           std::to_string(total.violations) + ',' + fmt(total.max_excess) + '\n';
  }
  return {ok, detail, csv};
}

// 6: second moment of the uniform ball.
Outcome ball_moment(std::uint64_t seed) {
  constexpr std::size_t kSamples = 100000;
  bool ok = true;
  std::string detail;
  std::string csv = "m,samples,mean_sq_norm,expected,relative_error\n";
  for (std::size_t m : {2u, 3u, 10u}) {
    const Matrix X = sample({DistributionModel{UniformBall{1.0}}, m, kSamples, derive_seed(seed, {m})});
    double sum = 0.0;
    for (std::size_t t = 0; t < kSamples; ++t) {
      double sq = 0.0;
      for (std::size_t i = 0; i < m; ++i) sq += X(i, t) * X(i, t);
      sum += sq;
    }
    const double mean = sum / kSamples;
    const double expected = static_cast<double>(m) / static_cast<double>(m + 2);
    const double rel = std::abs(mean - expected) / expected;
    ok = ok && rel <= 0.02;
    if (!detail.empty()) detail += "; ";
    detail += "m=" + std::to_string(m) + " rel err " + short_fmt(rel);
    csv += std::to_string(m) + ',' + std::to_string(kSamples) + ',' + fmt(mean) + ',' +
           fmt(expected) + ',' + fmt(rel) + '\n';
  }
  return {ok, detail + " (limit 0.02)", csv};
}

// 7: errors follow the intrinsic dimension l, not m.
Outcome subspace_ratio(std::uint64_t seed) {
  constexpr std::size_t kTrials = 30;
  std::vector<double> medians;
  std::vector<TrialRecord> all;
  for (std::size_t l : {4u, 16u}) {
    TrialConfig cfg;
    cfg.model = make_subspace(l, DistributionModel{StandardNormal{1.0}});
    cfg.m = 64;
    cfg.N0 = 2048;
    cfg.bits = 4;
    cfg.radius = 1.0;
    std::vector<TrialRecord> records(kTrials);
    parallel_for(kTrials, [&](std::size_t k) {
      records[k] = run_bound_trial(cfg, derive_seed(seed, {l, k}));
    });
    std::vector<double> errs;
    for (const TrialRecord& r : records) errs.push_back(r.rel_sq_error);
    medians.push_back(median(errs));
    all.insert(all.end(), records.begin(), records.end());
  }
  const double ratio = medians[1] / medians[0];
  const bool ok = ratio >= 2.0 && ratio <= 8.0;
  return {ok, "median ratio l=16 / l=4 is " + short_fmt(ratio) + " (want [2, 8])",
          "l,median_rel_sq_error\n4," + fmt(medians[0]) + "\n16," + fmt(medians[1]) + '\n' +
              to_csv(all)};
}

// 8: convolutional bound with the union over kernels, at p = 1 and p = 2.
Outcome cnn_bound(std::uint64_t seed) {
  constexpr std::size_t kSeeds = 100;
  bool ok = true;
  std::string detail;
  std::string csv = "exponent,seed,rows,cols,delta,max_sq_error,bound_value,bound_held,"
                    "predicted_failure,pooled_mean,pooled_variance\n";
  for (const double exponent : {1.0, 2.0}) {
    CnnTrialConfig cfg;
    cfg.exponent = exponent;
    std::vector<CnnTrialReport> reports(kSeeds);
    parallel_for(kSeeds, [&](std::size_t k) { reports[k] = cnn_bound_trial(cfg, derive_seed(seed, {k})); });

    std::size_t failures = 0;
    double mean = 0.0, var = 0.0;
    for (const CnnTrialReport& r : reports) {
      if (!r.bound_held) ++failures;
      mean += r.pooled_mean / kSeeds;
      var += r.pooled_variance / kSeeds;
      csv += fmt(exponent) + ',' + std::to_string(r.seed) + ',' + std::to_string(r.rows) + ',' +
             std::to_string(r.cols) + ',' + fmt(r.delta) + ',' + fmt(r.max_sq_error) + ',' +
             fmt(r.bound_value) + ',' + (r.bound_held ? "1" : "0") + ',' +
             fmt(r.predicted_failure) + ',' + fmt(r.pooled_mean) + ',' + fmt(r.pooled_variance) +
             '\n';
    }
    const double predicted = reports.front().predicted_failure;
    const double limit = binomial_limit(predicted, kSeeds);
    const double fraction = static_cast<double>(failures) / kSeeds;
    ok = ok && fraction <= limit;
    if (!detail.empty()) detail += "; ";
    detail += "p=" + short_fmt(exponent) + ": " + std::to_string(failures) + "/" +
              std::to_string(kSeeds) + " failures (predicted " + short_fmt(predicted) + ", limit " +
              short_fmt(limit) + ")";
    if (exponent == 1.0) {
      // Moment oracle on all unfolded entries: N(0,1) gives mean 0 and variance 1.
      const double n = static_cast<double>(kSeeds * reports.front().rows * reports.front().cols);
      const bool normal_ok = std::abs(mean) <= 3.0 / std::sqrt(n) &&
                             std::abs(var - 1.0) <= 3.0 * std::sqrt(2.0 / n);
      ok = ok && normal_ok;
      detail += "; pooled mean " + short_fmt(mean) + ", variance " + short_fmt(var);
    }
  }
  return {ok, detail, csv};
}

std::vector<double> column_means(const Matrix& m) {
  std::vector<double> s(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) s[j] += m(i, j);
  }
  for (double& v : s) v /= static_cast<double>(m.rows());
  return s;
}

double max_mean_gap(const Matrix& a, std::span<const double> ba, const Matrix& b,
                    std::span<const double> bb) {
  const std::vector<double> ma = column_means(a);
  const std::vector<double> mb = column_means(b);
  double gap = 0.0;
  for (std::size_t j = 0; j < ma.size(); ++j) {
    gap = std::max(gap, std::abs((ma[j] + ba[j]) - (mb[j] + bb[j])));
  }
  return gap;
}

// 9: bias correction restores the mean pre-activations.
Outcome bias_means(std::uint64_t seed) {
  constexpr std::size_t kLayers = 100;
  std::vector<double> gaps(kLayers);
  parallel_for(kLayers, [&](std::size_t k) {
    Rng rng = Rng::stream(seed, {k});
    const std::size_t m = 16 + static_cast<std::size_t>(rng.next() % 49);
    const std::size_t n_in = 8 + static_cast<std::size_t>(rng.next() % 57);
    const std::size_t n_out = 1 + static_cast<std::size_t>(rng.next() % 16);
    const Matrix X = normal_matrix(rng, m, n_in);
    Matrix Xt = X;
    if (k % 2 == 1) {
      for (double& v : Xt.storage()) v += 0.2 * rng.normal();
    }
    const Matrix W = normal_matrix(rng, n_in, n_out, 0.3);
    const std::vector<double> b = normal_vector(rng, n_out);
    const StepSize step = layer_step_size(W, 1.0, 3 + static_cast<int>(k % 4));
    const StepQuantizer quantizer(Alphabet(step.delta, step.K), Variant::plain());
    const Matrix Q = quantize_dense_layer(W, X, Xt, quantizer).Q;
    const std::vector<double> corrected = bias_correction(b, X, W, Xt, Q);
    gaps[k] = max_mean_gap(matmul(X, W), b, matmul(Xt, Q), corrected);
  });

  // Network path: the last layer of a quantized MLP, fed by the quantized prefix.
  Rng rng = Rng::stream(seed, {0xB1A5});
  ModelSpec model;
  model.layers.push_back(DenseLayer{normal_matrix(rng, 24, 32, 0.3), normal_vector(rng, 32), Activation::ReLU});
  model.layers.push_back(DenseLayer{normal_matrix(rng, 32, 10, 0.3), normal_vector(rng, 10), Activation::Identity});
  const Tensor input = Tensor::from_matrix(normal_matrix(rng, 64, 24));
  QuantConfig cfg;
  cfg.bits = 4;
  cfg.bias_correction = true;
  const NetworkQuantization nq = quantize_network(model, {input}, cfg);
  const Matrix h = forward_prefix(input, model, 1).flatten_to_matrix();
  const Matrix ht = forward_prefix(input, nq.model, 1).flatten_to_matrix();
  const auto& orig = std::get<DenseLayer>(model.layers[1]);
  const auto& quant = std::get<DenseLayer>(nq.model.layers[1]);
  const double network_gap =
      max_mean_gap(matmul(h, orig.weights), orig.bias, matmul(ht, quant.weights), quant.bias);

  const double worst = std::max(*std::max_element(gaps.begin(), gaps.end()), network_gap);
  std::string csv = "case,max_mean_gap\n";
  for (std::size_t k = 0; k < gaps.size(); ++k) csv += "layer" + std::to_string(k) + ',' + fmt(gaps[k]) + '\n';
  csv += "network," + fmt(network_gap) + '\n';
  return {worst <= 1e-10, "max column-mean gap " + short_fmt(worst) + " (limit 1e-10)", csv};
}

// 10: sparsity and accuracy of Soft and Hard on a trained MLP.
Outcome sparsity_behavior(std::uint64_t seed) {
  ClusterTaskSpec task_spec;
  task_spec.classes = 4;
  task_spec.dim = 256;
  task_spec.informative = 4;
  task_spec.center_scale = 1.25;
  task_spec.seed = derive_seed(seed, {1});
  const ClusterTask task = make_cluster_task(task_spec);

  TrainSpec train;
  train.hidden = 64;
  train.epochs = 300;
  train.learning_rate = 0.1;
  train.weight_decay = 0.01;
  train.seed = derive_seed(seed, {2});
  const ModelSpec model = train_mlp(task, train);

  constexpr std::size_t kCalibration = 256;
  Matrix calib(kCalibration, task.train_x.cols());
  for (std::size_t i = 0; i < kCalibration; ++i) {
    std::copy(task.train_x.row(i).begin(), task.train_x.row(i).end(), calib.row(i).begin());
  }

  QuantConfig base;
  base.bits = 5;
  base.C = 2.0;
  base.lambda_scale = LambdaScale::RelativeToQmax;
  base.seed = derive_seed(seed, {3});
  const std::vector<double> grid = {0.0,   0.0025, 0.005, 0.0075, 0.01, 0.0125,
                                    0.025, 0.05,   0.1,   0.15,   0.2,  0.25};
  const LambdaSweep sweep = sweep_lambda(model, {Tensor::from_matrix(calib)}, task.test_x,
                                         task.test_y, grid, {VariantKind::Soft, VariantKind::Hard},
                                         base);

  double soft0 = 0.0, soft_top = 0.0;
  double best_hard = 0.0, best_hard_lambda = -1.0;
  bool soft_monotone = true;
  double prev_soft = -1.0;
  std::string csv = "lambda_over_qmax,variant,sparsity,accuracy,reference_accuracy\n";
  for (const LambdaSweepRow& r : sweep.rows) {
    csv += fmt(r.lambda) + ',' + to_string(r.variant) + ',' + fmt(r.sparsity) + ',' +
           fmt(r.accuracy) + ',' + fmt(sweep.reference_accuracy) + '\n';
    if (r.variant == VariantKind::Soft) {
      if (r.lambda == 0.0) soft0 = r.sparsity;
      if (r.lambda == 0.0125) soft_top = r.sparsity;
      if (r.lambda <= 0.0125) {
        soft_monotone = soft_monotone && r.sparsity >= prev_soft;
        prev_soft = r.sparsity;
      }
    } else if (sweep.reference_accuracy - r.accuracy <= 0.05 && r.sparsity > best_hard) {
      best_hard = r.sparsity;
      best_hard_lambda = r.lambda;
    }
  }
  const double gain = soft_top - soft0;
  const bool ok = gain >= 0.10 && best_hard >= 0.5;
  std::string detail = "soft sparsity " + short_fmt(soft0) + " -> " + short_fmt(soft_top) +
                       " (gain " + short_fmt(gain) + ", want >= 0.1" +
                       (soft_monotone ? ", monotone" : ", not monotone") + "); hard best " +
                       short_fmt(best_hard) + " within 5 points of accuracy " +
                       short_fmt(sweep.reference_accuracy);
  if (best_hard_lambda >= 0.0) detail += " at lambda/q_max " + short_fmt(best_hard_lambda);
  return {ok, detail, csv};
}

Outcome dispatch(int id, std::uint64_t seed) {
  switch (id) {
    case 1: return closed_form(seed);
    case 2: return telescoping(seed);
    case 3: return decay_law(seed);
    case 4: return bound_frequency(seed);
    case 5: return step_audits(seed);
    case 6: return ball_moment(seed);
    case 7: return subspace_ratio(seed);
    case 8: return cnn_bound(seed);
    case 9: return bias_means(seed);
    case 10: return sparsity_behavior(seed);
    default: break;
  }
  throw Error(ErrorKind::InvalidSpec, "unknown criterion " + std::to_string(id));
}

// Suites whose reruns make up the determinism check.

}  // namespace

std::string criterion_name(int id) {
  switch (id) {
    case 1: return "closed-form step";
    case 2: return "residual identity";
    case 3: return "decay law";
    case 4: return "bound frequency";
    case 5: return "step audits";
    case 6: return "uniform-ball moment";
    case 7: return "subspace dimension";
    case 8: return "conv bound";
    case 9: return "bias correction";
    case 10: return "sparsity";
    case 11: return "determinism";
    default: break;
  }
  throw Error(ErrorKind::InvalidSpec, "unknown criterion " + std::to_string(id));
}

double criterion_budget_seconds(int id) {
  switch (id) {
    case 1: return 10.0;
    case 2: return 10.0;
    case 3: return 300.0;
    case 4: return 120.0;
    case 5: return 30.0;
    case 6: return 10.0;
    case 7: return 120.0;
    case 8: return 120.0;
    case 9: return 5.0;
    case 10: return 300.0;
    case 11: return 600.0;
    default: break;
  }
  throw Error(ErrorKind::InvalidSpec, "unknown criterion " + std::to_string(id));
}

CriterionResult run_criterion(int id, std::uint64_t master_seed) {
  if (id == kCriterionCount) return run_determinism({}, master_seed);
  CriterionResult result;
  result.id = id;
  result.name = criterion_name(id);
  result.budget_seconds = criterion_budget_seconds(id);
  const auto start = std::chrono::steady_clock::now();
  Outcome out = dispatch(id, derive_seed(master_seed, {static_cast<std::uint64_t>(id)}));
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.passed = out.passed && result.seconds <= result.budget_seconds;
  result.detail = std::move(out.detail);
  if (result.seconds > result.budget_seconds) {
    result.detail += "; over time budget of " + short_fmt(result.budget_seconds) + " s";
  }
  result.csv = std::move(out.csv);
  return result;
}

CriterionResult run_determinism(const std::vector<CriterionResult>& reference,
                                std::uint64_t master_seed) {
  CriterionResult result;
  result.id = kCriterionCount;
  result.name = criterion_name(kCriterionCount);
  result.budget_seconds = criterion_budget_seconds(kCriterionCount);
  const auto start = std::chrono::steady_clock::now();

  bool ok = true;
  std::string mismatched;
  std::string csv = "criterion,threads,bytes,identical\n";
  for (int id = 1; id < kCriterionCount; ++id) {
    std::string base;
    for (const CriterionResult& r : reference) {
      if (r.id == id) base = r.csv;
    }
    if (base.empty()) {
      const parallel::ScopedThreads one(1);
      base = dispatch(id, derive_seed(master_seed, {static_cast<std::uint64_t>(id)})).csv;
    }
    for (unsigned threads : {1u, 8u}) {
      const parallel::ScopedThreads scoped(threads);
      const std::string again =
          dispatch(id, derive_seed(master_seed, {static_cast<std::uint64_t>(id)})).csv;
      const bool same = again == base;
      ok = ok && same;
      if (!same) mismatched += " " + std::to_string(id) + "@" + std::to_string(threads);
      csv += std::to_string(id) + ',' + std::to_string(threads) + ',' +
             std::to_string(again.size()) + ',' + (same ? "1" : "0") + '\n';
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.passed = ok && result.seconds <= result.budget_seconds;
  result.detail = ok ? "suites 1-10 identical across runs at 1 and 8 threads"
                     : "CSV differs for" + mismatched;
  result.csv = csv;
  return result;
}

std::vector<CriterionResult> run_acceptance(const std::vector<int>& ids,
                                            std::uint64_t master_seed) {
  std::vector<CriterionResult> results;
  for (int id : ids) {
    if (id == kCriterionCount) {
      results.push_back(run_determinism(results, master_seed));
    } else {
      results.push_back(run_criterion(id, master_seed));
    }
  }
  return results;
}

}  // namespace gpfq
