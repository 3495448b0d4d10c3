#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "gpfq/error.hpp"
#include "gpfq/parallel.hpp"
#include "gpfq/synthetic.hpp"
#include "gpfq/verify.hpp"
#include "test_support.hpp"

using namespace gpfq;

namespace {

const DistributionModel kNormal{StandardNormal{1.0}};

StepQuantizer plain(double delta) { return StepQuantizer(Alphabet(delta, 8), Variant::plain()); }

}  // namespace

TEST_CASE("theorem_bound worked values") {
  CHECK(theorem_bound(DistributionModel{UniformBall{1.0}}, 1024, 4, plain(0.1)) ==
        doctest::Approx(0.04 * std::log(1024.0)));
  CHECK(theorem_bound(DistributionModel{UniformBall{1.0}}, 1024, 4, plain(0.1)) ==
        doctest::Approx(0.2773).epsilon(1e-3));
  CHECK(theorem_bound(kNormal, 1024, 4, plain(0.1), 1.0) == doctest::Approx(4.437).epsilon(1e-3));

  const double base = theorem_bound(kNormal, 1024, 4, plain(0.1));
  const StepQuantizer soft(Alphabet(0.1, 8), Variant::soft(0.1));
  CHECK(theorem_bound(kNormal, 1024, 4, soft) / base == doctest::Approx(9.0));
  const StepQuantizer hard = StepQuantizer::for_variant(Alphabet(0.1, 8), Variant::hard(0.15));
  CHECK(theorem_bound(kNormal, 1024, 4, hard) / base == doctest::Approx(9.0));
  const StepQuantizer hard_small = StepQuantizer::for_variant(Alphabet(0.1, 8), Variant::hard(0.02));
  CHECK(theorem_bound(kNormal, 1024, 4, hard_small) / base == doctest::Approx(1.0));

  CHECK(theorem_bound(DistributionModel{SymmetricBernoulli{}}, 100, 5, plain(0.2)) ==
        doctest::Approx(25 * 0.04 * std::log(100.0)));
  // Subspace data: the intrinsic dimension replaces m.
  CHECK(theorem_bound(make_subspace(3, kNormal), 512, 64, plain(0.1)) ==
        doctest::Approx(theorem_bound(kNormal, 512, 3, plain(0.1))));
  GaussianClusters g;
  g.centers = {std::vector<double>(8, 0.0)};
  CHECK_THROWS_AS(theorem_bound(make_subspace(2, DistributionModel{g}), 8, 4, plain(0.1)), Error);
}

TEST_CASE("cluster bound uses the inflation factor") {
  GaussianClusters g;
  g.centers = {std::vector<double>{0.0, 3.0, -1.0}};
  g.sigma = 1.5;
  const double k = 1.0 + 9.0 / (1.5 * 1.5);
  CHECK(theorem_bound(DistributionModel{g}, 3, 4, plain(0.1), 2.0) ==
        doctest::Approx(4 * 2.0 * 16 * k * k * 0.01 * 2.25 * std::log(3.0)));
}

TEST_CASE("failure probabilities") {
  const double s2 = 0.25;
  CHECK(predicted_failure_probability(DistributionModel{UniformBall{1.0}}, 1024, 4) ==
        doctest::Approx((2.0 + 1.0 / std::sqrt(1.0 - s2)) / (1024.0 * 1024.0)));
  CHECK(predicted_failure_probability(kNormal, 2, 4) == 1.0);
  const double p = predicted_failure_probability(kNormal, 1024, 4, 1.0);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK(predicted_failure_probability(kNormal, 1024, 4, 2.0) < p);
}

TEST_CASE("single-step trial obeys the memoryless bound") {
  TrialConfig cfg;
  cfg.model = DistributionModel{UniformBall{1.0}};
  cfg.m = 6;
  cfg.N0 = 1;
  cfg.bits = 3;
  cfg.record_steps = true;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    NeuronTrace trace;
    const TrialRecord r = run_bound_trial(cfg, seed, &trace);
    REQUIRE(trace.steps.size() == 1);
    REQUIRE(r.abs_sq_error <= r.delta * r.delta * trace.steps[0].x_sqnorm / 4 + 1e-15);
  }
}

TEST_CASE("zero weights give zero error under every bound") {
  const Matrix X = test::gaussian(8, 64, 3);
  const std::vector<double> w(64, 0.0);
  const NeuronTrace t = gpfq_quantize_neuron(w, X, X, plain(0.1));
  CHECK(t.final_residual_sqnorm == 0.0);
  CHECK(t.final_residual_sqnorm <= theorem_bound(kNormal, 64, 8, plain(0.1)));
}

TEST_CASE("trials: ReLU error never exceeds the linear error") {
  TrialConfig cfg;
  cfg.m = 8;
  cfg.N0 = 256;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const TrialRecord r = run_bound_trial(cfg, seed);
    REQUIRE(r.relu_sq_error <= r.abs_sq_error * (1 + 1e-12));
    REQUIRE(r.rel_sq_error >= 0.0);
    REQUIRE(r.bound_value == doctest::Approx(theorem_bound(cfg.model, cfg.N0, cfg.m,
                                                           StepQuantizer(Alphabet(r.delta, 16),
                                                                         Variant::plain()))));
  }
  CHECK(run_bound_trial(cfg, 7).rel_sq_error == run_bound_trial(cfg, 7).rel_sq_error);
}

TEST_CASE("width sweep fits a slope and rejects thin grids") {
  TrialConfig cfg;
  cfg.m = 16;
  cfg.radius_from_weights = true;
  const SweepResult s = sweep_width(cfg, {64, 256, 1024, 4096}, 20, 5);
  CHECK(s.xs.size() == 4);
  CHECK(s.medians.size() == 4);
  CHECK(s.fitted_slope < -0.75);
  CHECK(s.fitted_slope > -1.25);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(s.q10[i] <= s.medians[i]);
    CHECK(s.medians[i] <= s.q90[i]);
  }
  {
    const parallel::ScopedThreads four(4);
    CHECK(to_csv(sweep_width(cfg, {64, 256, 1024, 4096}, 20, 5).records) == to_csv(s.records));
  }
  CHECK_THROWS_AS(sweep_width(cfg, {64, 128, 256}, 5, 1), Error);
  CHECK_THROWS_AS(sweep_width(cfg, {64, 128, 256, 512}, 5, 1), Error);
}

TEST_CASE("doubling m roughly doubles the median error") {
  TrialConfig cfg;
  cfg.N0 = 1024;
  cfg.radius_from_weights = true;
  std::vector<double> a, b;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    cfg.m = 8;
    a.push_back(run_bound_trial(cfg, seed).rel_sq_error);
    cfg.m = 16;
    b.push_back(run_bound_trial(cfg, seed).rel_sq_error);
  }
  const double ratio = median(b) / median(a);
  CHECK(ratio >= 1.3);
  CHECK(ratio <= 3.0);
}

TEST_CASE("step audits") {
  const StepQuantizer qz(Alphabet(0.125, 8), Variant::plain());
  const Matrix X = test::gaussian(8, 128, 4);
  Rng rng(1);
  std::vector<double> on_levels(128);
  const std::vector<double> levels = qz.levels();
  for (double& v : on_levels) v = levels[rng.next() % levels.size()];
  std::vector<NeuronTrace> traces{gpfq_quantize_neuron(on_levels, X, X, qz, {true, true})};
  CHECK(audit_step_inequalities(traces, qz).violations == 0);

  for (const Variant v : {Variant::plain(), Variant::hard(0.3)}) {
    const StepQuantizer q = StepQuantizer::for_variant(Alphabet(0.125, 8), v);
    std::vector<NeuronTrace> ts;
    for (int i = 0; i < 200; ++i) {
      const Matrix Xi = test::gaussian(6, 64, 100 + i);
      std::vector<double> w(64);
      for (double& x : w) x = rng.uniform(-1.0, 1.0);
      ts.push_back(gpfq_quantize_neuron(w, Xi, Xi, q, {true, true}));
    }
    const AuditReport r = audit_step_inequalities(ts, q);
    CHECK(r.traces == 200);
    CHECK(r.steps_checked == 200 * 64);
    CHECK(r.violations == 0);
  }
}

TEST_CASE("quantiles interpolate linearly") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(quantile({0.0, 10.0}, 0.1) == doctest::Approx(1.0));
  CHECK(fit_loglog_slope(std::vector<double>{1, 2, 4, 8}, std::vector<double>{8, 4, 2, 1}) ==
        doctest::Approx(-1.0));
}

TEST_CASE("conv trial with one output channel uses the single-kernel bound") {
  CnnTrialConfig cfg;
  cfg.out_channels = 1;
  const CnnTrialReport r = cnn_bound_trial(cfg, 3);
  CHECK(r.rows == cfg.batch * cfg.blocks);
  CHECK(r.cols == cfg.in_channels * cfg.k1 * cfg.k2);
  CHECK(r.kernel_sq_errors.size() == 1);
  CHECK(r.max_sq_error == r.kernel_sq_errors[0]);
  CHECK(r.bound_value == theorem_bound(kNormal, r.cols, r.rows, StepQuantizer(Alphabet(r.delta, 8), Variant::plain())));
  CHECK(r.predicted_failure == predicted_failure_probability(kNormal, r.cols, r.rows));
  CHECK(cnn_bound_trial(cfg, 3).max_sq_error == r.max_sq_error);
}

TEST_CASE("trial CSV is versioned and round-trips doubles") {
  const std::string header = trial_csv_header();
  CHECK(header.rfind(std::string("# ") + kTrialCsvVersion + "\n", 0) == 0);
  CHECK(header.find("seed,distribution,m,N0,variant,delta,lambda,rel_sq_error") != std::string::npos);
  for (double v : {0.1, 1.0 / 3.0, 2.5e-300, -7.0, 0.0025}) {
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
  CHECK(format_double(0.0025) == "0.0025");
}

TEST_CASE("lambda sweep: zero lambda is plain and a huge lambda zeroes everything") {
  ClusterTaskSpec ts;
  ts.dim = 16;
  ts.train_per_class = 64;
  ts.test_per_class = 64;
  ts.center_scale = 1.0;
  ts.seed = 3;
  const ClusterTask task = make_cluster_task(ts);
  TrainSpec tr;
  tr.hidden = 16;
  tr.epochs = 60;
  tr.seed = 4;
  const ModelSpec model = train_mlp(task, tr);
  const std::vector<Tensor> calib{Tensor::from_matrix(task.train_x)};
  QuantConfig base;
  base.bits = 4;

  const LambdaSweep zero = sweep_lambda(model, calib, task.test_x, task.test_y, {0.0},
                                        {VariantKind::Soft}, base);
  const NetworkQuantization plain = quantize_network(model, calib, base);
  REQUIRE(zero.rows.size() == 1);
  CHECK(zero.rows[0].sparsity == plain.report.sparsity);
  CHECK(zero.rows[0].accuracy == accuracy(plain.model, task.test_x, task.test_y));

  const LambdaSweep huge = sweep_lambda(model, calib, task.test_x, task.test_y, {1e6},
                                        {VariantKind::Soft, VariantKind::Hard}, base);
  for (const LambdaSweepRow& r : huge.rows) CHECK(r.sparsity == 1.0);

  const std::vector<double> grid{0.0125, 0.0, 0.01, 0.0025, 0.0075, 0.005};
  QuantConfig rel = base;
  rel.lambda_scale = LambdaScale::RelativeToQmax;
  const LambdaSweep s = sweep_lambda(model, calib, task.test_x, task.test_y, grid,
                                     {VariantKind::Soft, VariantKind::Hard}, rel);
  CHECK(s.rows.size() == 12);
  for (std::size_t i = 1; i < s.rows.size(); ++i) CHECK(s.rows[i - 1].lambda <= s.rows[i].lambda);
  CHECK(s.rows.front().lambda == 0.0);
  CHECK(s.rows.back().lambda == 0.0125);
}
