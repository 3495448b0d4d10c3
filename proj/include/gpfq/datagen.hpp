#pragma once

// Seeded generators for the input-data models used by the error bounds.
//
// Column t of every sampled matrix is drawn from its own stream keyed by
// (seed, t), so generation order and thread count never change the output.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "gpfq/matrix.hpp"

namespace gpfq {

/// Columns uniform on the closed ball of radius r.
struct UniformBall {
  double radius = 1.0;
};

/// Entries independent and uniform on {-1, +1}.
struct SymmetricBernoulli {};

/// d clusters stacked by rows: rows [i*n, (i+1)*n) of column t are
/// N(centers[i][t], sigma^2). centers[i] has one entry per column.
struct GaussianClusters {
  std::vector<std::vector<double>> centers;
  double sigma = 1.0;
  std::size_t per_cluster = 1;
};

/// Entries i.i.d. N(0, sigma^2).
struct StandardNormal {
  double sigma = 1.0;
};

struct DistributionModel;

/// X = V F with V (m x dim) orthonormal and F (dim x N0) drawn from `inner`.
struct Subspace {
  std::size_t dim = 1;
  std::shared_ptr<const DistributionModel> inner;
};

struct DistributionModel {
  std::variant<UniformBall, SymmetricBernoulli, GaussianClusters, StandardNormal, Subspace> kind;
};

struct DistributionSpec {
  DistributionModel model;
  std::size_t m = 1;
  std::size_t N0 = 1;
  std::uint64_t seed = 0;
};

DistributionModel make_subspace(std::size_t dim, DistributionModel inner);

/// Short human-readable label, e.g. "uniform_ball(r=1)".
std::string describe(const DistributionModel& model);

/// Throws InvalidSpec on r <= 0, sigma <= 0, dim >= m, rows != n * d, or
/// centers of the wrong length.
void validate(const DistributionSpec& spec);

Matrix sample(const DistributionSpec& spec);

/// Modified Gram-Schmidt (two passes) on a seeded Gaussian m x l matrix.
Matrix random_orthonormal(std::size_t m, std::size_t l, std::uint64_t seed);

/// Entries i.i.d. Uniform(-q_max, q_max), redrawn from the same stream until
/// ||w||_2^2 >= N0 q_max^2 / 6.
std::vector<double> generic_weight(std::size_t N0, double q_max, std::uint64_t seed);

bool is_generic(const std::vector<double>& w, double q_max) noexcept;

}  // namespace gpfq
