#include "gpfq/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "gpfq/error.hpp"
#include "gpfq/rng.hpp"

namespace gpfq {
namespace {

void fill_split(const Matrix& centers, std::size_t per_class, double sigma, std::uint64_t seed,
                Matrix& x, std::vector<int>& y) {
  const std::size_t classes = centers.rows();
  const std::size_t dim = centers.cols();
  x = Matrix(classes * per_class, dim);
  y.assign(classes * per_class, 0);
  // Interleave classes so any prefix of the rows is balanced.
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t row = i * classes + c;
      Rng rng = Rng::stream(seed, {row});
      for (std::size_t j = 0; j < dim; ++j) x(row, j) = centers(c, j) + sigma * rng.normal();
      y[row] = static_cast<int>(c);
    }
  }
}

Matrix he_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  Matrix w(fan_in, fan_out);
  Rng rng = Rng::stream(seed, {0});
  const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : w.storage()) v = scale * rng.normal();
  return w;
}

void add_bias_relu(Matrix& z, const std::vector<double>& b, bool relu) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] += b[j];
      if (relu && row[j] < 0.0) row[j] = 0.0;
    }
  }
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> s(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) s[j] += row[j];
  }
  return s;
}

void step(std::vector<double>& param, std::vector<double>& velocity,
          const std::vector<double>& grad, double lr, double momentum) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] - lr * grad[i];
    param[i] += velocity[i];
  }
}

}  // namespace

ClusterTask make_cluster_task(const ClusterTaskSpec& spec) {
  if (spec.classes < 2 || spec.dim == 0 || spec.train_per_class == 0 ||
      spec.test_per_class == 0 || !(spec.sigma > 0.0) || !(spec.center_scale > 0.0)) {
    throw Error(ErrorKind::InvalidSpec, "cluster task needs >= 2 classes and positive sizes");
  }
  if (spec.informative > spec.dim) {
    throw Error(ErrorKind::InvalidSpec, "informative coordinates exceed the dimension");
  }
  const std::size_t informative = spec.informative == 0 ? spec.dim : spec.informative;
  Matrix centers(spec.classes, spec.dim);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Rng rng = Rng::stream(derive_seed(spec.seed, {0}), {c});
    for (std::size_t j = 0; j < informative; ++j) centers(c, j) = spec.center_scale * rng.normal();
  }
  ClusterTask task;
  task.classes = spec.classes;
  fill_split(centers, spec.train_per_class, spec.sigma, derive_seed(spec.seed, {1}), task.train_x,
             task.train_y);
  fill_split(centers, spec.test_per_class, spec.sigma, derive_seed(spec.seed, {2}), task.test_x,
             task.test_y);
  return task;
}

ModelSpec train_mlp(const ClusterTask& task, const TrainSpec& spec) {
  const Matrix& x = task.train_x;
  const std::size_t n = x.rows();
  const std::size_t classes = task.classes;
  if (n == 0 || spec.hidden == 0 || task.train_y.size() != n) {
    throw Error(ErrorKind::InvalidSpec, "training needs data, labels and a hidden layer");
  }

  Matrix w1 = he_init(x.cols(), spec.hidden, derive_seed(spec.seed, {1}));
  Matrix w2 = he_init(spec.hidden, classes, derive_seed(spec.seed, {2}));
  std::vector<double> b1(spec.hidden, 0.0), b2(classes, 0.0);
  std::vector<double> vw1(w1.size(), 0.0), vw2(w2.size(), 0.0);
  std::vector<double> vb1(b1.size(), 0.0), vb2(b2.size(), 0.0);
  const Matrix xt = x.transposed();
  const double inv_n = 1.0 / static_cast<double>(n);

  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    Matrix h = matmul(x, w1);
    add_bias_relu(h, b1, true);
    Matrix g = matmul(h, w2);
    add_bias_relu(g, b2, false);
    // Softmax cross-entropy gradient, averaged over the batch.
    for (std::size_t i = 0; i < n; ++i) {
      auto row = g.row(i);
      const double peak = *std::max_element(row.begin(), row.end());
      double total = 0.0;
      for (double& v : row) total += (v = std::exp(v - peak));
      for (double& v : row) v /= total;
      row[static_cast<std::size_t>(task.train_y[i])] -= 1.0;
      for (double& v : row) v *= inv_n;
    }
    Matrix dw2 = matmul(h.transposed(), g);
    const std::vector<double> db2 = column_sums(g);
    Matrix dh = matmul(g, w2.transposed());
    for (std::size_t i = 0; i < dh.size(); ++i) {
      if (h.storage()[i] <= 0.0) dh.storage()[i] = 0.0;
    }
    Matrix dw1 = matmul(xt, dh);
    axpy(spec.weight_decay, w1.data(), dw1.data());
    axpy(spec.weight_decay, w2.data(), dw2.data());
    const std::vector<double> db1 = column_sums(dh);

    step(w1.storage(), vw1, dw1.storage(), spec.learning_rate, spec.momentum);
    step(w2.storage(), vw2, dw2.storage(), spec.learning_rate, spec.momentum);
    step(b1, vb1, db1, spec.learning_rate, spec.momentum);
    step(b2, vb2, db2, spec.learning_rate, spec.momentum);
  }

  ModelSpec model;
  model.layers.push_back(DenseLayer{std::move(w1), std::move(b1), Activation::ReLU});
  model.layers.push_back(DenseLayer{std::move(w2), std::move(b2), Activation::Identity});
  return model;
}

double accuracy(const ModelSpec& model, const Matrix& x, const std::vector<int>& labels) {
  if (x.rows() != labels.size()) {
    throw Error(ErrorKind::ShapeMismatch, "accuracy: rows and labels differ");
  }
  if (labels.empty()) return 0.0;
  const Matrix logits = forward(Tensor::from_matrix(x), model).flatten_to_matrix();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

LambdaSweep sweep_lambda(const ModelSpec& model, const std::vector<Tensor>& calibration,
                         const Matrix& eval_x, const std::vector<int>& eval_y,
                         std::vector<double> lambdas, const std::vector<VariantKind>& variants,
                         const QuantConfig& base) {
  if (lambdas.empty() || variants.empty()) {
    throw Error(ErrorKind::InvalidSpec, "lambda sweep needs lambdas and variants");
  }
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw Error(ErrorKind::InvalidSpec, "lambda values must be finite and >= 0");
    }
  }
  std::stable_sort(lambdas.begin(), lambdas.end());

  LambdaSweep out;
  out.reference_accuracy = accuracy(model, eval_x, eval_y);
  for (double l : lambdas) {
    for (VariantKind kind : variants) {
      QuantConfig cfg = base;
      cfg.variant = Variant{kind, kind == VariantKind::Plain ? 0.0 : l};
      const NetworkQuantization nq = quantize_network(model, calibration, cfg);
      LambdaSweepRow row;
      row.lambda = l;
      row.variant = kind;
      row.sparsity = nq.report.sparsity;
      row.accuracy = accuracy(nq.model, eval_x, eval_y);
      out.rows.push_back(row);
    }
  }
  return out;
}

}  // namespace gpfq
