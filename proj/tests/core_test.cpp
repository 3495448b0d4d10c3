#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gpfq/core.hpp"
#include "gpfq/error.hpp"
#include "test_support.hpp"

using namespace gpfq;
using gpfq::test::gaussian;

namespace {

std::vector<double> col(const Matrix& m, std::size_t t) { return m.column(t); }

}  // namespace

TEST_CASE("gpfq_step hand-evaluated run") {
  const StepQuantizer qz(Alphabet(0.5, 2), Variant::plain());
  const std::vector<double> x{1.0};
  const StepOutcome a = gpfq_step(std::vector<double>{0.0}, 0.3, x, x, qz);
  CHECK(a.q == 0.5);
  CHECK(a.u[0] == doctest::Approx(-0.2));
  const StepOutcome b = gpfq_step(a.u, 0.3, x, x, qz);
  CHECK(b.q == 0.0);
  CHECK(b.u[0] == doctest::Approx(0.1));
}

TEST_CASE("gpfq_step returns a level when the argument already is one") {
  const StepQuantizer qz(Alphabet(0.25, 8), Variant::plain());
  const std::vector<double> levels = qz.levels();
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const Matrix X = gaussian(6, 1, rng.next());
    const std::vector<double> x = col(X, 0);
    const Matrix U = gaussian(6, 1, rng.next(), 0.1);
    const std::vector<double> u = col(U, 0);
    const double p = levels[rng.next() % levels.size()];
    const double w = p - dot(x, u) / squared_norm(x);
    REQUIRE(gpfq_step(u, w, x, x, qz).q == p);
  }
}

TEST_CASE("degenerate column falls back to memoryless quantization") {
  const StepQuantizer qz(Alphabet(0.5, 2), Variant::soft(0.1));
  const std::vector<double> u{0.2, -0.1};
  const std::vector<double> x{1.0, 2.0};
  const std::vector<double> zero{0.0, 0.0};
  const StepOutcome s = gpfq_step(u, 0.7, x, zero, qz);
  CHECK(s.degenerate);
  CHECK(s.q == qz(0.7));
  CHECK(s.u[0] == doctest::Approx(0.2 + 0.7));
  CHECK(s.u[1] == doctest::Approx(-0.1 + 1.4));
}

TEST_CASE("neuron quantization: zero weights and weights on levels") {
  const StepQuantizer qz(Alphabet(0.125, 8), Variant::plain());
  const Matrix X = gaussian(8, 64, 17);
  const std::vector<double> zeros(64, 0.0);
  const NeuronTrace z = gpfq_quantize_neuron(zeros, X, X, qz);
  CHECK(z.q == zeros);
  CHECK(z.final_residual_sqnorm == 0.0);
  CHECK(residual_identity_check(z, zeros, X, X) == 0.0);

  Rng rng(2);
  const std::vector<double> levels = qz.levels();
  std::vector<double> w(64);
  for (double& v : w) v = levels[rng.next() % levels.size()];
  const NeuronTrace f = gpfq_quantize_neuron(w, X, X, qz);
  CHECK(f.q == w);
  CHECK(f.final_residual_sqnorm <= 1e-24);
  CHECK(residual_identity_check(f, w, X, X) <= 1e-10);
}

TEST_CASE("argmin_objective_brute agrees with the closed form") {
  const std::vector<double> levels{-1, -0.5, 0, 0.5, 1};
  const std::vector<double> one{1.0};
  CHECK(argmin_objective_brute(std::vector<double>{0.0}, 0.3, one, one, levels, 0.0) == 0.5);
  CHECK_THROWS_AS(argmin_objective_brute(std::vector<double>{0.0}, 0.3, one, one, {}, 0.0), Error);

  Rng rng(99);
  int compared = 0;
  for (int i = 0; i < 20000; ++i) {
    const std::size_t m = 1 + rng.next() % 8;
    const int K = 1 + static_cast<int>(rng.next() % 8);
    const double delta = rng.uniform(0.05, 1.0);
    const Alphabet base(delta, K);
    const bool soft = i % 2 == 1;
    const double lambda = soft ? rng.uniform(0.0, delta) : 0.0;
    const StepQuantizer qz(base, soft ? Variant::soft(lambda) : Variant::plain());
    const Matrix X = gaussian(m, 1, rng.next());
    Matrix Xt = X;
    if (i % 4 < 2) Xt = gaussian(m, 1, rng.next());
    const Matrix U = gaussian(m, 1, rng.next(), 0.3);
    const double w = rng.uniform(-1.5 * base.q_max(), 1.5 * base.q_max());
    const std::vector<double> x = col(X, 0), xt = col(Xt, 0), u = col(U, 0);

    // Skip near-ties between the two best levels.
    const std::vector<double> lv = base.levels();
    std::vector<double> obj;
    for (double p : lv) {
      double s = 0.0;
      for (std::size_t r = 0; r < m; ++r) {
        const double e = u[r] + w * x[r] - p * xt[r];
        s += e * e;
      }
      obj.push_back(0.5 * s + lambda * std::abs(p) * squared_norm(xt));
    }
    std::sort(obj.begin(), obj.end());
    if (obj[1] - obj[0] <= 1e-9) continue;
    ++compared;
    REQUIRE(gpfq_step(u, w, x, xt, qz).q == argmin_objective_brute(u, w, x, xt, lv, lambda));
  }
  CHECK(compared > 19000);
}

TEST_CASE("residual telescopes and matches a from-scratch recomputation") {
  const StepQuantizer qz = StepQuantizer::for_variant(Alphabet(0.1, 16), Variant::hard(0.05));
  const Matrix X = gaussian(12, 200, 7);
  const Matrix Xt = gaussian(12, 200, 8);
  Matrix Xmix = X;
  for (std::size_t i = 0; i < Xmix.size(); ++i) Xmix.storage()[i] += 0.05 * Xt.storage()[i];
  Rng rng(4);
  std::vector<double> w(200);
  for (double& v : w) v = rng.uniform(-1.6, 1.6);

  std::vector<double> u(12, 0.0), sum(12, 0.0);
  for (std::size_t t = 0; t < 200; ++t) {
    const std::vector<double> x = col(X, t), xt = col(Xmix, t);
    const StepOutcome s = gpfq_step(u, w[t], x, xt, qz);
    u = s.u;
    for (std::size_t r = 0; r < 12; ++r) sum[r] += w[t] * x[r] - s.q * xt[r];
    REQUIRE(std::sqrt(squared_distance(u, sum)) <= 1e-10 * std::max(1.0, std::sqrt(squared_norm(sum))));
  }
  const NeuronTrace trace = gpfq_quantize_neuron(w, X, Xmix, qz);
  CHECK(residual_identity_check(trace, w, X, Xmix) <= 1e-10);
  for (double q : trace.q) REQUIRE(qz.contains(q));
}

TEST_CASE("soft variant zeroes every step whose argument is inside the dead zone") {
  const double lambda = 0.2;
  const StepQuantizer qz(Alphabet(0.1, 8), Variant::soft(lambda));
  const Matrix X = gaussian(10, 300, 21);
  Rng rng(6);
  std::vector<double> w(300);
  for (double& v : w) v = rng.uniform(-0.8, 0.8);
  const NeuronTrace t = gpfq_quantize_neuron(w, X, X, qz, {true, true});
  std::size_t dead = 0;
  for (const StepRecord& s : t.steps) {
    REQUIRE(qz.contains(s.q));
    if (std::abs(s.arg) <= lambda) {
      REQUIRE(s.q == 0.0);
      ++dead;
    }
  }
  CHECK(dead > 0);
  CHECK(t.step_inequality_violations == 0);
}

TEST_CASE("variants and errors") {
  CHECK(parse_variant("soft") == VariantKind::Soft);
  CHECK_THROWS_AS(parse_variant("medium"), Error);
  CHECK(StepQuantizer::for_variant(Alphabet(0.5, 2), Variant::hard(0.0)).kind() == VariantKind::Plain);
  CHECK_THROWS_AS(StepQuantizer(Alphabet(0.5, 2), Variant::hard(0.1)), Error);

  const StepQuantizer qz(Alphabet(0.5, 2), Variant::plain());
  const Matrix X(4, 3), Y(4, 2);
  try {
    gpfq_quantize_neuron(std::vector<double>(3, 0.0), X, Y, qz);
    FAIL("expected a shape mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
}
