#pragma once

// Layer- and network-level quantization.
//
// quantize_network walks the layers in order. For layer i it first pushes the
// calibration batch through the original prefix (giving X) and through the
// already-quantized prefix (giving X~), then quantizes every neuron of layer i
// against (X, X~). Convolutional layers are reduced to the dense case by
// unfolding disjoint kernel-sized blocks (stride = kernel size) into rows.

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "gpfq/core.hpp"
#include "gpfq/matrix.hpp"
#include "gpfq/tensor.hpp"

namespace gpfq {

enum class Activation { Identity, ReLU };

const char* to_string(Activation a) noexcept;
Activation parse_activation(const std::string& name);

struct DenseLayer {
  Matrix weights;  // N_in x N_out, one neuron per column
  std::vector<double> bias;
  Activation activation = Activation::Identity;

  std::size_t inputs() const noexcept { return weights.rows(); }
  std::size_t outputs() const noexcept { return weights.cols(); }
};

struct ConvLayer {
  Tensor kernels;  // C_out x C_in x k1 x k2; stride is (k1, k2)
  std::vector<double> bias;
  Activation activation = Activation::Identity;

  std::size_t out_channels() const noexcept { return kernels.shape[0]; }
  std::size_t in_channels() const noexcept { return kernels.shape[1]; }
  std::size_t kernel_rows() const noexcept { return kernels.shape[2]; }
  std::size_t kernel_cols() const noexcept { return kernels.shape[3]; }

  /// (C_in k1 k2) x C_out, one vectorized kernel per column.
  Matrix kernel_matrix() const;
  void set_kernel_matrix(const Matrix& m);
};

using Layer = std::variant<DenseLayer, ConvLayer>;

struct ModelSpec {
  std::vector<Layer> layers;

  std::size_t size() const noexcept { return layers.size(); }
  /// Checks tensor ranks, bias lengths, finiteness and dense-to-dense chaining.
  void validate() const;
};

/// Weight matrix of a layer in column-per-neuron form.
Matrix weight_matrix(const Layer& layer);

struct StepSize {
  double delta = 0.0;
  int K = 0;
};

/// delta = C / (2^(b-1) N_out) * sum_j ||W_j||_inf over the columns of W.
StepSize layer_step_size(const Matrix& W, double C, int bits);

Tensor forward_layer(const Tensor& input, const Layer& layer);
/// Applies the first `count` layers.
Tensor forward_prefix(const Tensor& input, const ModelSpec& model, std::size_t count);
Tensor forward(const Tensor& input, const ModelSpec& model);

struct DenseQuantization {
  Matrix Q;
  std::vector<NeuronTrace> traces;
};

/// Quantizes each column of W independently (in parallel across columns).
DenseQuantization quantize_dense_layer(const Matrix& W, const Matrix& X, const Matrix& X_tilde,
                                       const StepQuantizer& quantizer,
                                       const NeuronOptions& options = {});

/// keep[b][j] says whether block j of image b is retained.
using BlockSelection = std::vector<std::vector<bool>>;

/// One Bernoulli(p) draw per block per image from a stream keyed by (seed, image).
BlockSelection select_blocks(std::size_t images, std::size_t blocks_per_image, double p,
                             std::uint64_t seed);

/// Unfolds Z (B x C_in x S1 x S2) into rows of vectorized disjoint k1 x k2
/// blocks across all channels. Sides not divisible by the kernel are cropped
/// at the bottom/right. Rows are ordered by image, then block row, then
/// block column.
Matrix unfold_conv_input(const Tensor& Z, std::size_t k1, std::size_t k2,
                         const BlockSelection& keep);
Matrix unfold_conv_input(const Tensor& Z, std::size_t k1, std::size_t k2, double p,
                         std::uint64_t seed);

enum class BiasCorrectionScope { LastLayer, AllLayers };
enum class LambdaScale { Absolute, RelativeToQmax };

struct QuantConfig {
  int bits = 5;
  double C = 1.0;
  Variant variant = Variant::plain();
  LambdaScale lambda_scale = LambdaScale::Absolute;
  double sample_prob = 1.0;  // conv block sampling probability p
  bool last_layer_unquantized = false;
  bool bias_correction = false;
  BiasCorrectionScope bias_scope = BiasCorrectionScope::LastLayer;
  std::vector<int> per_layer_bits;  // empty, or one entry per layer
  /// Empty, or one entry per layer; a positive entry replaces the computed
  /// step size of that layer.
  std::vector<double> fixed_delta;
  std::uint64_t seed = 0;

  void validate(std::size_t layer_count) const;
  int bits_for(std::size_t layer) const noexcept;
};

struct LayerReport {
  std::size_t index = 0;
  std::string kind;
  bool quantized = false;
  int bits = 0;
  double delta = 0.0;
  double lambda = 0.0;
  double q_max = 0.0;
  std::size_t samples = 0;  // rows of X used for this layer
  std::size_t neurons = 0;
  double mean_relative_sq_residual = 0.0;
  double max_relative_sq_residual = 0.0;
  double mean_residual_sqnorm = 0.0;
  double sparsity = 0.0;
  std::size_t neurons_exceeding_qmax = 0;
  bool bias_corrected = false;
  /// Layers of the quantized model that produced X~ for this layer.
  std::size_t quantized_prefix_layers = 0;
};

struct NetworkReport {
  std::vector<LayerReport> layers;
  double sparsity = 0.0;
};

struct NetworkQuantization {
  ModelSpec model;
  NetworkReport report;
};

/// `calibration` holds either one batch shared by all layers or one batch per layer.
NetworkQuantization quantize_network(const ModelSpec& model,
                                     const std::vector<Tensor>& calibration,
                                     const QuantConfig& config);

/// b + column means of (X W - X Q).
std::vector<double> bias_correction(std::span<const double> bias, const Matrix& X,
                                    const Matrix& W, const Matrix& Q);
/// b + column means of (X W - X~ Q): matches mean pre-activations along the
/// quantized path.
std::vector<double> bias_correction(std::span<const double> bias, const Matrix& X,
                                    const Matrix& W, const Matrix& X_tilde, const Matrix& Q);

/// Fraction of entries that are exactly zero (1.0 for an empty matrix).
double sparsity(const Matrix& Q) noexcept;
/// Entry-weighted sparsity over the layers with include[i] set.
double sparsity(const ModelSpec& model, const std::vector<bool>& include);

}  // namespace gpfq
