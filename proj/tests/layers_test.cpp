#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "gpfq/error.hpp"
#include "gpfq/layers.hpp"
#include "gpfq/parallel.hpp"
#include "test_support.hpp"

using namespace gpfq;
using gpfq::test::gaussian;

namespace {

DenseLayer dense(std::size_t in, std::size_t out, std::uint64_t seed, Activation act) {
  DenseLayer l;
  l.weights = gaussian(in, out, seed, 1.0 / std::sqrt(static_cast<double>(in)));
  l.bias = gaussian(1, out, seed + 1, 0.1).storage();
  l.activation = act;
  return l;
}

StepQuantizer plain_quantizer(const Matrix& W, double C, int bits) {
  const StepSize s = layer_step_size(W, C, bits);
  return StepQuantizer::for_variant(Alphabet(s.delta, s.K), Variant::plain());
}

}  // namespace

TEST_CASE("layer_step_size averages column infinity norms") {
  const StepSize s = layer_step_size(Matrix::identity(2), 1.0, 2);
  CHECK(s.delta == 0.5);
  CHECK(s.K == 2);

  Matrix W(3, 4, 0.0);
  for (std::size_t j = 0; j < 4; ++j) W(j % 3, j) = (j % 2 ? -0.8 : 0.8);
  CHECK(layer_step_size(W, 1.5, 4).delta == doctest::Approx(1.5 * 0.8 / 8));

  const Matrix R = gaussian(50, 30, 9);
  double sum = 0.0;
  for (std::size_t j = 0; j < R.cols(); ++j) {
    double mx = 0.0;
    for (std::size_t i = 0; i < R.rows(); ++i) mx = std::max(mx, std::abs(R(i, j)));
    sum += mx;
  }
  CHECK(layer_step_size(R, 1.1, 5).delta == doctest::Approx(1.1 * sum / 30 / 16).epsilon(1e-14));
}

TEST_CASE("forward_layer matches a naive product") {
  DenseLayer id{Matrix::identity(3), {0, 0, 0}, Activation::Identity};
  const Matrix X = gaussian(5, 3, 1);
  CHECK(forward_layer(Tensor::from_matrix(X), id).flatten_to_matrix() == X);

  DenseLayer neg{Matrix::identity(3), {-100, -100, -100}, Activation::ReLU};
  for (double v : forward_layer(Tensor::from_matrix(X), neg).data) CHECK(v == 0.0);

  const DenseLayer l = dense(7, 4, 3, Activation::ReLU);
  const Matrix Y = forward_layer(Tensor::from_matrix(gaussian(6, 7, 2)), l).flatten_to_matrix();
  const Matrix Xin = gaussian(6, 7, 2);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      double s = l.bias[c];
      for (std::size_t k = 0; k < 7; ++k) s += Xin(r, k) * l.weights(k, c);
      REQUIRE(std::abs(Y(r, c) - std::max(0.0, s)) <= 1e-12);
    }
  }
}

TEST_CASE("quantize_dense_layer is column separable and thread independent") {
  const Matrix X = gaussian(16, 40, 5);
  const Matrix W = gaussian(40, 12, 6, 0.3);
  const StepQuantizer qz = plain_quantizer(W, 1.0, 4);

  CHECK(quantize_dense_layer(Matrix(40, 12, 0.0), X, X, qz).Q == Matrix(40, 12, 0.0));

  const DenseQuantization base = quantize_dense_layer(W, X, X, qz);
  for (double v : base.Q.storage()) REQUIRE(qz.contains(v));
  const NeuronTrace single = gpfq_quantize_neuron(W.column(3), X, X, qz);
  CHECK(base.Q.column(3) == single.q);

  {
    const parallel::ScopedThreads four(4);
    CHECK(quantize_dense_layer(W, X, X, qz).Q == base.Q);
  }
  Matrix reversed(40, 12);
  for (std::size_t j = 0; j < 12; ++j) reversed.set_column(j, W.column(11 - j));
  const Matrix Qr = quantize_dense_layer(reversed, X, X, qz).Q;
  for (std::size_t j = 0; j < 12; ++j) CHECK(Qr.column(j) == base.Q.column(11 - j));
}

TEST_CASE("unfold_conv_input tiles disjoint blocks") {
  Tensor one({1, 1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) one.data[i] = static_cast<double>(i);
  const Matrix u1 = unfold_conv_input(one, 3, 3, 1.0, 0);
  CHECK(u1.rows() == 1);
  CHECK(std::vector<double>(u1.storage()) == one.data);

  Tensor z({2, 1, 4, 4});
  for (std::size_t i = 0; i < z.size(); ++i) z.data[i] = static_cast<double>(i);
  const Matrix u = unfold_conv_input(z, 2, 2, 1.0, 0);
  CHECK(u.rows() == 8);
  CHECK(u.cols() == 4);
  std::set<std::vector<double>> rows;
  double sq = 0.0;
  for (std::size_t r = 0; r < u.rows(); ++r) {
    rows.insert(std::vector<double>(u.row(r).begin(), u.row(r).end()));
    for (double v : u.row(r)) sq += v * v;
  }
  CHECK(rows.size() == 8);
  double sq_in = 0.0;
  for (double v : z.data) sq_in += v * v;
  CHECK(sq == sq_in);
  CHECK(u(0, 0) == 0.0);
  CHECK(u(0, 1) == 1.0);
  CHECK(u(0, 2) == 4.0);
  CHECK(u(0, 3) == 5.0);

  // Two channels: each row holds the block from both channels.
  const Tensor two = Tensor({1, 2, 5, 5}, gaussian(1, 50, 3).storage());
  const Matrix u2 = unfold_conv_input(two, 2, 2, 1.0, 0);
  CHECK(u2.rows() == 4);  // 5x5 cropped to 4x4
  CHECK(u2.cols() == 8);
  CHECK(u2(0, 4) == two.data[25]);
}

TEST_CASE("block subsampling keeps a binomial fraction") {
  const BlockSelection keep = select_blocks(100, 100, 0.25, 77);
  std::size_t kept = 0;
  for (const auto& image : keep) kept += static_cast<std::size_t>(std::count(image.begin(), image.end(), true));
  const double sd = std::sqrt(1e4 * 0.25 * 0.75);
  CHECK(std::abs(static_cast<double>(kept) - 2500.0) <= 3.0 * sd);
  CHECK(select_blocks(100, 100, 0.25, 77) == keep);
}

TEST_CASE("single-layer network equals direct layer quantization") {
  const DenseLayer l = dense(32, 8, 11, Activation::ReLU);
  const Matrix X = gaussian(20, 32, 12);
  QuantConfig cfg;
  cfg.bits = 4;
  const NetworkQuantization nq = quantize_network(ModelSpec{{l}}, {Tensor::from_matrix(X)}, cfg);
  const Matrix Q = quantize_dense_layer(l.weights, X, X, plain_quantizer(l.weights, 1.0, 4)).Q;
  CHECK(std::get<DenseLayer>(nq.model.layers[0]).weights == Q);
  CHECK(std::get<DenseLayer>(nq.model.layers[0]).bias == l.bias);
}

TEST_CASE("second layer sees data from the quantized prefix") {
  const DenseLayer l1 = dense(24, 16, 21, Activation::ReLU);
  const DenseLayer l2 = dense(16, 5, 22, Activation::Identity);
  const Matrix X = gaussian(30, 24, 23);
  QuantConfig cfg;
  cfg.bits = 3;
  const NetworkQuantization nq = quantize_network(ModelSpec{{l1, l2}}, {Tensor::from_matrix(X)}, cfg);

  const Matrix Q1 = quantize_dense_layer(l1.weights, X, X, plain_quantizer(l1.weights, 1.0, 3)).Q;
  DenseLayer q1 = l1;
  q1.weights = Q1;
  const Matrix X1 = forward_layer(Tensor::from_matrix(X), l1).flatten_to_matrix();
  const Matrix X1t = forward_layer(Tensor::from_matrix(X), q1).flatten_to_matrix();
  const Matrix Q2 = quantize_dense_layer(l2.weights, X1, X1t, plain_quantizer(l2.weights, 1.0, 3)).Q;
  CHECK(std::get<DenseLayer>(nq.model.layers[0]).weights == Q1);
  CHECK(std::get<DenseLayer>(nq.model.layers[1]).weights == Q2);
  CHECK(nq.report.layers[1].quantized_prefix_layers == 1);
}

TEST_CASE("two-layer MLP output error stays small at 5 bits") {
  const DenseLayer l1 = dense(512, 256, 31, Activation::ReLU);
  const DenseLayer l2 = dense(256, 10, 32, Activation::Identity);
  const ModelSpec model{{l1, l2}};
  const Tensor X = Tensor::from_matrix(gaussian(512, 512, 33));
  QuantConfig cfg;
  cfg.bits = 5;
  const NetworkQuantization nq = quantize_network(model, {X}, cfg);
  const Matrix a = forward(X, model).flatten_to_matrix();
  const Matrix b = forward(X, nq.model).flatten_to_matrix();
  const double rel = std::sqrt(squared_distance(a, b) / squared_frobenius(a));
  CHECK(rel < 0.1);
}

TEST_CASE("last layer unquantized and mixed precision") {
  const DenseLayer l1 = dense(16, 12, 41, Activation::ReLU);
  const DenseLayer l2 = dense(12, 4, 42, Activation::Identity);
  const Tensor X = Tensor::from_matrix(gaussian(25, 16, 43));

  QuantConfig keep;
  keep.last_layer_unquantized = true;
  const NetworkQuantization a = quantize_network(ModelSpec{{l1, l2}}, {X}, keep);
  CHECK(std::get<DenseLayer>(a.model.layers[1]).weights == l2.weights);
  CHECK_FALSE(a.report.layers[1].quantized);

  QuantConfig mixed;
  mixed.per_layer_bits = {3, 6};
  const NetworkQuantization b = quantize_network(ModelSpec{{l1, l2}}, {X}, mixed);
  for (std::size_t i = 0; i < 2; ++i) {
    const LayerReport& r = b.report.layers[i];
    CHECK(r.bits == mixed.per_layer_bits[i]);
    const Alphabet alpha(r.delta, 1 << (r.bits - 1));
    const Matrix Q = weight_matrix(b.model.layers[i]);
    for (double v : Q.storage()) REQUIRE(alpha.contains(v));
  }

  QuantConfig wrong;
  wrong.per_layer_bits = {3};
  CHECK_THROWS_AS(quantize_network(ModelSpec{{l1, l2}}, {X}, wrong), Error);
}

TEST_CASE("bias correction matches mean pre-activations") {
  const Matrix X = gaussian(40, 9, 51);
  const Matrix W = gaussian(9, 6, 52);
  const std::vector<double> b = gaussian(1, 6, 53).storage();
  CHECK(bias_correction(b, X, W, W) == b);

  const Matrix row = gaussian(1, 9, 54);
  const Matrix Q = gaussian(9, 6, 55);
  const std::vector<double> c1 = bias_correction(b, row, W, Q);
  const Matrix diff = matmul(row, W);
  const Matrix diffq = matmul(row, Q);
  for (std::size_t j = 0; j < 6; ++j) CHECK(c1[j] == doctest::Approx(b[j] + diff(0, j) - diffq(0, j)));

  const std::vector<double> c = bias_correction(b, X, W, Q);
  const Matrix XW = matmul(X, W), XQ = matmul(X, Q);
  for (std::size_t j = 0; j < 6; ++j) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < 40; ++i) {
      ma += XW(i, j) + b[j];
      mb += XQ(i, j) + c[j];
    }
    CHECK(std::abs(ma - mb) / 40 <= 1e-10);
  }
}

TEST_CASE("sparsity counts exact zeros") {
  CHECK(sparsity(Matrix(3, 3, 0.0)) == 1.0);
  CHECK(sparsity(Matrix(3, 3, 1.0)) == 0.0);
  Matrix m(2, 2, 1.0);
  m(0, 1) = 0.0;
  CHECK(sparsity(m) == 0.25);
}

TEST_CASE("calibration count must be 1 or one per layer") {
  const DenseLayer l1 = dense(4, 4, 61, Activation::ReLU);
  const Tensor X = Tensor::from_matrix(gaussian(5, 4, 62));
  try {
    quantize_network(ModelSpec{{l1, l1, l1}}, {X, X}, QuantConfig{});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IncompatibleModel);
  }
  CHECK_NOTHROW(quantize_network(ModelSpec{{l1, l1, l1}}, {X, X, X}, QuantConfig{}));
}

TEST_CASE("conv layer quantization stays on the alphabet") {
  ConvLayer conv;
  conv.kernels = Tensor({4, 2, 2, 2}, gaussian(1, 32, 71, 0.5).storage());
  conv.bias = {0.1, 0.0, -0.1, 0.2};
  conv.activation = Activation::ReLU;
  const Tensor images({3, 2, 6, 6}, gaussian(1, 216, 72).storage());
  QuantConfig cfg;
  cfg.bits = 4;
  const NetworkQuantization nq = quantize_network(ModelSpec{{conv}}, {images}, cfg);
  const LayerReport& r = nq.report.layers[0];
  CHECK(r.samples == 27);
  const Alphabet alpha(r.delta, 8);
  for (double v : std::get<ConvLayer>(nq.model.layers[0]).kernels.data) REQUIRE(alpha.contains(v));
}
