#include "gpfq/tensor.hpp"

#include "gpfq/error.hpp"

namespace gpfq {

std::size_t element_count(const std::vector<std::size_t>& dims) noexcept {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(dims[i]);
  }
  return s.empty() ? "scalar" : s;
}

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)), data(element_count(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
  if (data.size() != element_count(shape)) {
    throw Error(ErrorKind::ShapeMismatch, "tensor of shape " + shape_string(shape) + " given " +
                                              std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::from_matrix(const Matrix& m) {
  return Tensor({m.rows(), m.cols()}, m.storage());
}

Matrix Tensor::flatten_to_matrix() const {
  if (shape.empty()) throw Error(ErrorKind::ShapeMismatch, "cannot flatten a scalar");
  const std::size_t rows = shape[0];
  const std::size_t cols = rows == 0 ? 0 : data.size() / rows;
  return Matrix(rows, cols, data);
}

}  // namespace gpfq
