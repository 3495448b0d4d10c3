#include <doctest.h>

#include <cmath>
#include <vector>

#include "gpfq/alphabet.hpp"
#include "gpfq/error.hpp"
#include "gpfq/rng.hpp"

using namespace gpfq;

TEST_CASE("build_midtread derives K and delta from bits and radius") {
  const Alphabet a = build_midtread({5, 1.0});
  CHECK(a.K() == 16);
  CHECK(a.delta() == 1.0 / 16);
  CHECK(a.q_max() == 1.0);

  const Alphabet b = build_midtread({2, 2.0});
  CHECK(b.K() == 2);
  CHECK(b.delta() == 1.0);
  CHECK(b.levels() == std::vector<double>{-2, -1, 0, 1, 2});

  const Alphabet c = build_midtread({3, 1.0});
  CHECK(c.K() == 4);
  CHECK(c.delta() == 0.25);
}

TEST_CASE("invalid alphabets are rejected") {
  auto kind_of = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  CHECK(kind_of([] { build_midtread({1, 1.0}); }) == ErrorKind::InvalidSpec);
  CHECK(kind_of([] { build_midtread({4, 0.0}); }) == ErrorKind::InvalidSpec);
  CHECK(kind_of([] { Alphabet(0.0, 2); }) == ErrorKind::InvalidSpec);
  CHECK(kind_of([] { Alphabet(0.5, 0); }) == ErrorKind::InvalidSpec);
  CHECK(kind_of([] { ThresholdAlphabet(0.5, 2, 0.0); }) == ErrorKind::InvalidSpec);
}

TEST_CASE("msq follows the floor formula") {
  const Alphabet a(0.5, 2);
  CHECK(msq(0.3, a) == 0.5);
  CHECK(msq(3.7, a) == 1.0);
  CHECK(msq(-3.7, a) == -1.0);
  CHECK(msq(0.25, a) == 0.5);
  CHECK(msq(-0.25, a) == 0.0);
  CHECK(msq(0.0, a) == 0.0);
}

TEST_CASE("thresholding functions") {
  CHECK(soft_threshold(0.25, 0.1) == doctest::Approx(0.15));
  CHECK(soft_threshold(-0.05, 0.1) == 0.0);
  CHECK(soft_threshold(-1.7, 0.0) == -1.7);
  CHECK(hard_threshold(0.25, 0.1) == 0.25);
  CHECK(hard_threshold(0.1, 0.1) == 0.0);
  CHECK(hard_threshold(-0.3, 0.1) == -0.3);
}

TEST_CASE("msq_thresholded over levels {0, +-0.3, +-0.8, +-1.3}") {
  const ThresholdAlphabet a(0.5, 2, 0.3);
  CHECK(a.levels() == std::vector<double>{-1.3, -0.8, -0.3, 0.0, 0.3, 0.8, 1.3});
  CHECK(msq_thresholded(0.2, a) == 0.0);
  CHECK(msq_thresholded(0.5, a) == 0.3);
  CHECK(msq_thresholded(-1.0, a) == -0.8);
}

TEST_CASE("nearest_brute breaks ties toward the larger level") {
  const std::vector<double> levels{-1, -0.5, 0, 0.5, 1};
  CHECK(nearest_brute(0.3, levels) == 0.5);
  CHECK(nearest_brute(0.25, levels) == 0.5);
  CHECK(nearest_brute(-0.25, levels) == 0.0);
}

TEST_CASE("msq equals exhaustive search over 1e5 points") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const double delta = rng.uniform(0.01, 1.0);
    const int K = 1 + static_cast<int>(rng.next() % 16);
    const Alphabet a(delta, K);
    const std::vector<double> levels = a.levels();
    for (int i = 0; i < 5000; ++i) {
      double z = rng.uniform(-2.0 * a.q_max(), 2.0 * a.q_max());
      if (i % 10 == 0) z = (std::floor(z / delta) + 0.5) * delta;  // probe half-steps
      const double q = msq(z, a);
      const double brute = nearest_brute(z, levels);
      // Half-step probes may land a rounding error away from the exact tie.
      if (q != brute) REQUIRE(std::abs(std::abs(z - q) - std::abs(z - brute)) <= 1e-12);
      REQUIRE(a.contains(q));
      if (std::abs(z) <= a.q_max()) REQUIRE(std::abs(q - z) <= delta / 2 + 1e-15);
      if (std::abs(z) > a.q_max()) REQUIRE(q == std::copysign(a.q_max(), z));
    }
  }
}

TEST_CASE("msq is odd away from tie points") {
  const Alphabet a(0.37, 5);
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double z = rng.uniform(-3.0, 3.0);
    const double r = z / a.delta() + 0.5;
    if (r == std::floor(r)) continue;
    REQUIRE(msq(-z, a) == -msq(z, a));
  }
}

TEST_CASE("thresholded quantizer zero set and membership on a fine grid") {
  const double delta = 0.2, lambda = 0.15;
  const ThresholdAlphabet a(delta, 4, lambda);
  for (int i = -40000; i <= 40000; ++i) {
    const double z = i * 5e-5;
    const double q = msq_thresholded(z, a);
    REQUIRE(a.contains(q));
    // Every nonzero level has magnitude >= lambda, so only the dead zone maps to 0.
    REQUIRE((q == 0.0) == (std::abs(z) <= lambda));
  }
}
