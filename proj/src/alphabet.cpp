#include "gpfq/alphabet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gpfq/error.hpp"

namespace gpfq {
namespace {

// Level index magnitude min(|floor(x/delta + 1/2)|, K) as a double.
double level_index(double x, double delta, int K) noexcept {
  const double k = std::abs(std::floor(x / delta + 0.5));
  return std::min(k, static_cast<double>(K));
}

}  // namespace

Alphabet::Alphabet(double delta, int levels) : delta_(delta), K_(levels), q_max_(0.0) {
  if (!(delta > 0.0) || !std::isfinite(delta) || levels < 1) {
    throw Error(ErrorKind::InvalidSpec, "alphabet needs delta > 0 and K >= 1 (delta=" +
                                            std::to_string(delta) +
                                            ", K=" + std::to_string(levels) + ")");
  }
  q_max_ = static_cast<double>(K_) * delta_;
}

std::vector<double> Alphabet::levels() const {
  std::vector<double> out;
  out.reserve(2 * static_cast<std::size_t>(K_) + 1);
  for (int k = K_; k >= 1; --k) out.push_back(-(static_cast<double>(k) * delta_));
  out.push_back(0.0);
  for (int k = 1; k <= K_; ++k) out.push_back(static_cast<double>(k) * delta_);
  return out;
}

bool Alphabet::contains(double value) const noexcept {
  const double k = std::round(std::abs(value) / delta_);
  if (k > K_) return false;
  return std::abs(value) == k * delta_;
}

ThresholdAlphabet::ThresholdAlphabet(double delta, int levels, double lambda)
    : delta_(delta), K_(levels), lambda_(lambda), q_max_(0.0) {
  if (!(delta > 0.0) || !std::isfinite(delta) || levels < 1 || !(lambda > 0.0) ||
      !std::isfinite(lambda)) {
    throw Error(ErrorKind::InvalidSpec, "threshold alphabet needs delta > 0, K >= 1, lambda > 0");
  }
  q_max_ = lambda_ + static_cast<double>(K_) * delta_;
}

std::vector<double> ThresholdAlphabet::levels() const {
  std::vector<double> out;
  out.reserve(2 * static_cast<std::size_t>(K_) + 3);
  for (int k = K_; k >= 0; --k) out.push_back(-(lambda_ + static_cast<double>(k) * delta_));
  out.push_back(0.0);
  for (int k = 0; k <= K_; ++k) out.push_back(lambda_ + static_cast<double>(k) * delta_);
  return out;
}

bool ThresholdAlphabet::contains(double value) const noexcept {
  if (value == 0.0) return true;
  const double mag = std::abs(value);
  const double k = std::round((mag - lambda_) / delta_);
  if (k < 0 || k > K_) return false;
  return mag == lambda_ + k * delta_;
}

Alphabet build_midtread(BitWidthSpec spec) {
  if (spec.bits < 2 || spec.bits > 31) {
    throw Error(ErrorKind::InvalidSpec, "bit width must be in [2, 31], got " +
                                            std::to_string(spec.bits));
  }
  if (!(spec.radius > 0.0) || !std::isfinite(spec.radius)) {
    throw Error(ErrorKind::InvalidSpec, "radius must be positive");
  }
  const int K = 1 << (spec.bits - 1);
  return Alphabet(spec.radius / static_cast<double>(K), K);
}

double msq(double z, const Alphabet& alphabet) noexcept {
  const double k = level_index(z, alphabet.delta(), alphabet.K());
  if (k == 0.0 || z == 0.0) return 0.0;
  const double magnitude = k * alphabet.delta();
  return z > 0.0 ? magnitude : -magnitude;
}

double soft_threshold(double z, double lambda) noexcept {
  const double mag = std::abs(z) - lambda;
  if (mag <= 0.0) return 0.0;
  return z > 0.0 ? mag : -mag;
}

double hard_threshold(double z, double lambda) noexcept { return std::abs(z) > lambda ? z : 0.0; }

double msq_thresholded(double z, const ThresholdAlphabet& alphabet) noexcept {
  if (std::abs(z) <= alphabet.lambda()) return 0.0;
  const double shrunk = soft_threshold(z, alphabet.lambda());
  const double k = level_index(shrunk, alphabet.delta(), alphabet.K());
  const double magnitude = alphabet.lambda() + k * alphabet.delta();
  return z > 0.0 ? magnitude : -magnitude;
}

double nearest_brute(double z, std::span<const double> levels) noexcept {
  double best = levels.front();
  double best_dist = std::abs(z - best);
  for (double p : levels.subspan(1)) {
    const double d = std::abs(z - p);
    if (d < best_dist || (d == best_dist && p > best)) {
      best = p;
      best_dist = d;
    }
  }
  return best;
}

}  // namespace gpfq
