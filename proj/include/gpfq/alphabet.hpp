#pragma once

// Quantization alphabets and the memoryless scalar quantizers over them.
//
// A midtread alphabet with step delta and level count K holds the 2K+1
// values {k * delta : -K <= k <= K}. The threshold alphabet adds a dead zone
// of half-width lambda around zero: {0} U {+-(lambda + k * delta) : 0 <= k <= K}.
//
// Levels are always produced by the expression `lambda + k * delta` (or
// `k * delta`), and the quantizers return values built from the same
// expression, so membership checks can use exact floating-point equality.

#include <span>
#include <vector>

namespace gpfq {

class Alphabet {
 public:
  /// Throws InvalidSpec unless delta > 0 and K >= 1.
  Alphabet(double delta, int levels);

  double delta() const noexcept { return delta_; }
  int K() const noexcept { return K_; }
  double q_max() const noexcept { return q_max_; }

  /// All 2K+1 levels in ascending order.
  std::vector<double> levels() const;
  bool contains(double value) const noexcept;

 private:
  double delta_;
  int K_;
  double q_max_;
};

class ThresholdAlphabet {
 public:
  /// Throws InvalidSpec unless delta > 0, K >= 1 and lambda > 0.
  ThresholdAlphabet(double delta, int levels, double lambda);

  double delta() const noexcept { return delta_; }
  int K() const noexcept { return K_; }
  double lambda() const noexcept { return lambda_; }
  double q_max() const noexcept { return q_max_; }

  /// All 2K+3 levels in ascending order.
  std::vector<double> levels() const;
  bool contains(double value) const noexcept;

 private:
  double delta_;
  int K_;
  double lambda_;
  double q_max_;
};

struct BitWidthSpec {
  int bits;
  double radius;
};

/// K = 2^(b-1), delta = R / 2^(b-1). Throws InvalidSpec if b < 2 or R <= 0.
Alphabet build_midtread(BitWidthSpec spec);

/// delta * sign(z) * min(|floor(z / delta + 1/2)|, K), with sign(0) = 0.
double msq(double z, const Alphabet& alphabet) noexcept;

double soft_threshold(double z, double lambda) noexcept;
double hard_threshold(double z, double lambda) noexcept;

/// 0 if |z| <= lambda, else sign(z) * (lambda + delta * min(|floor(s(z)/delta + 1/2)|, K))
/// where s is soft thresholding at lambda.
double msq_thresholded(double z, const ThresholdAlphabet& alphabet) noexcept;

/// Exhaustive nearest-level search; ties go to the larger level.
/// Precondition: levels is non-empty.
double nearest_brute(double z, std::span<const double> levels) noexcept;

}  // namespace gpfq
