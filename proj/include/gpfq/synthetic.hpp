#pragma once

// Gaussian-cluster classification task and a small MLP trainer, used as an
// accuracy proxy when sweeping lambda.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gpfq/core.hpp"
#include "gpfq/layers.hpp"

namespace gpfq {

struct ClusterTaskSpec {
  std::size_t classes = 4;
  std::size_t dim = 64;
  std::size_t train_per_class = 256;
  std::size_t test_per_class = 256;
  /// Only the first `informative` coordinates of the centers are nonzero
  /// (0 means all of them); they are i.i.d. N(0, center_scale^2).
  std::size_t informative = 0;
  double center_scale = 0.25;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

struct ClusterTask {
  Matrix train_x;  // samples x dim
  std::vector<int> train_y;
  Matrix test_x;
  std::vector<int> test_y;
  std::size_t classes = 0;
};

ClusterTask make_cluster_task(const ClusterTaskSpec& spec);

struct TrainSpec {
  std::size_t hidden = 64;
  std::size_t epochs = 300;
  double learning_rate = 0.1;
  double momentum = 0.9;
  /// L2 penalty on the weights (not the biases).
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

/// dim -> hidden (ReLU) -> classes, trained by full-batch gradient descent
/// with momentum on softmax cross-entropy.
ModelSpec train_mlp(const ClusterTask& task, const TrainSpec& spec);

/// Fraction of rows whose largest logit sits at the label (ties to the lower class).
double accuracy(const ModelSpec& model, const Matrix& x, const std::vector<int>& labels);

struct LambdaSweepRow {
  double lambda = 0.0;  // in the units of QuantConfig::lambda_scale
  VariantKind variant = VariantKind::Plain;
  double sparsity = 0.0;  // over quantized layers
  double accuracy = 0.0;
};

struct LambdaSweep {
  double reference_accuracy = 0.0;
  std::vector<LambdaSweepRow> rows;  // ascending lambda, then variant order
};

/// Quantizes `model` once per (lambda, variant) with `base` otherwise fixed.
/// Lambdas must be >= 0.
LambdaSweep sweep_lambda(const ModelSpec& model, const std::vector<Tensor>& calibration,
                         const Matrix& eval_x, const std::vector<int>& eval_y,
                         std::vector<double> lambdas, const std::vector<VariantKind>& variants,
                         const QuantConfig& base);

}  // namespace gpfq
