#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gpfq/matrix.hpp"

namespace gpfq {

/// Row-major n-dimensional array of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  Tensor(std::vector<std::size_t> dims, std::vector<double> values);

  static Tensor from_matrix(const Matrix& m);

  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t size() const noexcept { return data.size(); }

  /// Views the tensor as shape[0] x (product of the remaining dims).
  Matrix flatten_to_matrix() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t element_count(const std::vector<std::size_t>& dims) noexcept;
std::string shape_string(const std::vector<std::size_t>& dims);

}  // namespace gpfq
