#include "gpfq/layers.hpp"

#include <algorithm>
#include <cmath>

#include "gpfq/error.hpp"
#include "gpfq/parallel.hpp"
#include "gpfq/rng.hpp"

namespace gpfq {
namespace {

double activate(Activation a, double v) noexcept {
  return a == Activation::ReLU ? std::max(v, 0.0) : v;
}

const char* layer_kind(const Layer& layer) noexcept {
  return std::holds_alternative<DenseLayer>(layer) ? "dense" : "conv";
}

const std::vector<double>& layer_bias(const Layer& layer) {
  return std::visit([](const auto& l) -> const std::vector<double>& { return l.bias; }, layer);
}

std::vector<double>& layer_bias(Layer& layer) {
  return std::visit([](auto& l) -> std::vector<double>& { return l.bias; }, layer);
}

void set_weight_matrix(Layer& layer, const Matrix& m) {
  if (auto* dense = std::get_if<DenseLayer>(&layer)) {
    dense->weights = m;
  } else {
    std::get<ConvLayer>(layer).set_kernel_matrix(m);
  }
}

std::vector<double> column_means(const Matrix& m) {
  std::vector<double> means(m.cols(), 0.0);
  if (m.rows() == 0) return means;
  for (std::size_t r = 0; r < m.rows(); ++r) axpy(1.0, m.row(r), means);
  for (double& v : means) v /= static_cast<double>(m.rows());
  return means;
}

}  // namespace

const char* to_string(Activation a) noexcept {
  return a == Activation::ReLU ? "relu" : "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "identity" || name == "linear") return Activation::Identity;
  throw Error(ErrorKind::InvalidSpec, "unknown activation '" + name + "'");
}

Matrix ConvLayer::kernel_matrix() const {
  const std::size_t outs = out_channels();
  const std::size_t per = kernels.size() / std::max<std::size_t>(outs, 1);
  Matrix m(per, outs);
  for (std::size_t o = 0; o < outs; ++o) {
    for (std::size_t j = 0; j < per; ++j) m(j, o) = kernels.data[o * per + j];
  }
  return m;
}

void ConvLayer::set_kernel_matrix(const Matrix& m) {
  const std::size_t outs = out_channels();
  const std::size_t per = kernels.size() / std::max<std::size_t>(outs, 1);
  if (m.rows() != per || m.cols() != outs) {
    throw Error(ErrorKind::ShapeMismatch, "kernel matrix shape");
  }
  for (std::size_t o = 0; o < outs; ++o) {
    for (std::size_t j = 0; j < per; ++j) kernels.data[o * per + j] = m(j, o);
  }
}

void ModelSpec::validate() const {
  if (layers.empty()) throw Error(ErrorKind::IncompatibleModel, "model has no layers");
  std::size_t previous_dense_outputs = 0;
  bool previous_dense = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = "layer " + std::to_string(i) + ": ";
    if (const auto* dense = std::get_if<DenseLayer>(&layers[i])) {
      if (dense->bias.size() != dense->outputs()) {
        throw Error(ErrorKind::IncompatibleModel, where + "bias length != outputs");
      }
      if (!dense->weights.all_finite()) {
        throw Error(ErrorKind::IncompatibleModel, where + "non-finite weights");
      }
      if (previous_dense && previous_dense_outputs != dense->inputs()) {
        throw Error(ErrorKind::IncompatibleModel,
                    where + "expects " + std::to_string(dense->inputs()) +
                        " inputs but previous layer has " +
                        std::to_string(previous_dense_outputs) + " outputs");
      }
      previous_dense = true;
      previous_dense_outputs = dense->outputs();
    } else {
      const auto& conv = std::get<ConvLayer>(layers[i]);
      if (conv.kernels.rank() != 4) {
        throw Error(ErrorKind::IncompatibleModel, where + "conv kernels must be 4-d");
      }
      if (conv.bias.size() != conv.out_channels()) {
        throw Error(ErrorKind::IncompatibleModel, where + "bias length != output channels");
      }
      if (previous_dense) {
        throw Error(ErrorKind::IncompatibleModel, where + "conv layer cannot follow a dense layer");
      }
      for (double v : conv.kernels.data) {
        if (!std::isfinite(v)) throw Error(ErrorKind::IncompatibleModel, where + "non-finite");
      }
    }
  }
}

Matrix weight_matrix(const Layer& layer) {
  if (const auto* dense = std::get_if<DenseLayer>(&layer)) return dense->weights;
  return std::get<ConvLayer>(layer).kernel_matrix();
}

StepSize layer_step_size(const Matrix& W, double C, int bits) {
  if (W.empty()) throw Error(ErrorKind::InvalidSpec, "empty weight matrix");
  if (bits < 2 || bits > 31) throw Error(ErrorKind::InvalidSpec, "bits must be in [2, 31]");
  if (!(C > 0.0)) throw Error(ErrorKind::InvalidSpec, "C must be positive");
  double total = 0.0;
  for (std::size_t j = 0; j < W.cols(); ++j) {
    double col_max = 0.0;
    for (std::size_t i = 0; i < W.rows(); ++i) col_max = std::max(col_max, std::abs(W(i, j)));
    total += col_max;
  }
  const int K = 1 << (bits - 1);
  return {C / (static_cast<double>(K) * static_cast<double>(W.cols())) * total, K};
}

Tensor forward_layer(const Tensor& input, const Layer& layer) {
  if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
    const Matrix x = input.flatten_to_matrix();
    if (x.cols() != dense->inputs()) {
      throw Error(ErrorKind::ShapeMismatch, "dense layer expects " +
                                                std::to_string(dense->inputs()) +
                                                " features, input has " +
                                                std::to_string(x.cols()));
    }
    Matrix out = matmul(x, dense->weights);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        row[c] = activate(dense->activation, row[c] + dense->bias[c]);
      }
    }
    return Tensor::from_matrix(out);
  }

  const auto& conv = std::get<ConvLayer>(layer);
  if (input.rank() != 4 || input.shape[1] != conv.in_channels()) {
    throw Error(ErrorKind::ShapeMismatch, "conv layer expects B x " +
                                              std::to_string(conv.in_channels()) +
                                              " x S1 x S2 input, got " +
                                              shape_string(input.shape));
  }
  const std::size_t k1 = conv.kernel_rows(), k2 = conv.kernel_cols();
  const std::size_t batch = input.shape[0];
  const std::size_t oh = input.shape[2] / k1, ow = input.shape[3] / k2;
  const Matrix unfolded =
      unfold_conv_input(input, k1, k2, BlockSelection(batch, std::vector<bool>(oh * ow, true)));
  const Matrix responses = matmul(unfolded, conv.kernel_matrix());  // (B*oh*ow) x C_out
  const std::size_t outs = conv.out_channels();
  Tensor out({batch, outs, oh, ow});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t blk = 0; blk < oh * ow; ++blk) {
      const std::size_t row = b * oh * ow + blk;
      for (std::size_t o = 0; o < outs; ++o) {
        out.data[(b * outs + o) * oh * ow + blk] =
            activate(conv.activation, responses(row, o) + conv.bias[o]);
      }
    }
  }
  return out;
}

Tensor forward_prefix(const Tensor& input, const ModelSpec& model, std::size_t count) {
  Tensor x = input;
  for (std::size_t i = 0; i < count && i < model.size(); ++i) x = forward_layer(x, model.layers[i]);
  return x;
}

Tensor forward(const Tensor& input, const ModelSpec& model) {
  return forward_prefix(input, model, model.size());
}

DenseQuantization quantize_dense_layer(const Matrix& W, const Matrix& X, const Matrix& X_tilde,
                                       const StepQuantizer& quantizer,
                                       const NeuronOptions& options) {
  if (X.cols() != W.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "data has " + std::to_string(X.cols()) +
                                              " columns but W has " + std::to_string(W.rows()) +
                                              " rows");
  }
  const LayerData data(X, X_tilde);
  DenseQuantization result{Matrix(W.rows(), W.cols()), std::vector<NeuronTrace>(W.cols())};
  const Matrix columns = W.transposed();
  parallel::parallel_for(W.cols(), [&](std::size_t j) {
    result.traces[j] = quantize_neuron(columns.row(j), data, quantizer, options);
  });
  for (std::size_t j = 0; j < W.cols(); ++j) result.Q.set_column(j, result.traces[j].q);
  return result;
}

BlockSelection select_blocks(std::size_t images, std::size_t blocks_per_image, double p,
                             std::uint64_t seed) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidSpec, "sampling probability must be in (0, 1]");
  BlockSelection keep(images, std::vector<bool>(blocks_per_image, true));
  if (p == 1.0) return keep;
  for (std::size_t b = 0; b < images; ++b) {
    Rng rng = Rng::stream(seed, {0xB10C, b});
    for (std::size_t j = 0; j < blocks_per_image; ++j) keep[b][j] = rng.bernoulli(p);
  }
  return keep;
}

Matrix unfold_conv_input(const Tensor& Z, std::size_t k1, std::size_t k2,
                         const BlockSelection& keep) {
  if (Z.rank() != 4) throw Error(ErrorKind::ShapeMismatch, "unfold expects a 4-d tensor");
  if (k1 == 0 || k2 == 0) throw Error(ErrorKind::InvalidSpec, "kernel size must be positive");
  const std::size_t batch = Z.shape[0], channels = Z.shape[1];
  const std::size_t s1 = Z.shape[2], s2 = Z.shape[3];
  const std::size_t bh = s1 / k1, bw = s2 / k2;
  if (keep.size() != batch) throw Error(ErrorKind::ShapeMismatch, "block selection batch size");
  std::size_t rows = 0;
  for (const auto& image : keep) {
    if (image.size() != bh * bw) throw Error(ErrorKind::ShapeMismatch, "block selection size");
    rows += static_cast<std::size_t>(std::count(image.begin(), image.end(), true));
  }
  const std::size_t width = channels * k1 * k2;
  Matrix out(rows, width);
  std::size_t r = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t bi = 0; bi < bh; ++bi) {
      for (std::size_t bj = 0; bj < bw; ++bj) {
        if (!keep[b][bi * bw + bj]) continue;
        auto row = out.row(r++);
        std::size_t col = 0;
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t di = 0; di < k1; ++di) {
            const std::size_t base = ((b * channels + c) * s1 + bi * k1 + di) * s2 + bj * k2;
            for (std::size_t dj = 0; dj < k2; ++dj) row[col++] = Z.data[base + dj];
          }
        }
      }
    }
  }
  return out;
}

Matrix unfold_conv_input(const Tensor& Z, std::size_t k1, std::size_t k2, double p,
                         std::uint64_t seed) {
  if (Z.rank() != 4) throw Error(ErrorKind::ShapeMismatch, "unfold expects a 4-d tensor");
  if (k1 == 0 || k2 == 0) throw Error(ErrorKind::InvalidSpec, "kernel size must be positive");
  const std::size_t blocks = (Z.shape[2] / k1) * (Z.shape[3] / k2);
  return unfold_conv_input(Z, k1, k2, select_blocks(Z.shape[0], blocks, p, seed));
}

void QuantConfig::validate(std::size_t layer_count) const {
  if (bits < 2 || bits > 31) throw Error(ErrorKind::InvalidSpec, "bits must be in [2, 31]");
  if (!(C > 0.0) || !std::isfinite(C)) throw Error(ErrorKind::InvalidSpec, "C must be positive");
  if (!(sample_prob > 0.0 && sample_prob <= 1.0)) {
    throw Error(ErrorKind::InvalidSpec, "sampling probability must be in (0, 1]");
  }
  if (!(variant.lambda >= 0.0) || !std::isfinite(variant.lambda)) {
    throw Error(ErrorKind::InvalidSpec, "lambda must be >= 0");
  }
  if (!per_layer_bits.empty()) {
    if (per_layer_bits.size() != layer_count) {
      throw Error(ErrorKind::InvalidSpec, "per_layer_bits needs one entry per layer");
    }
    for (int b : per_layer_bits) {
      if (b < 2 || b > 31) throw Error(ErrorKind::InvalidSpec, "per-layer bits must be in [2, 31]");
    }
  }
  if (!fixed_delta.empty()) {
    if (fixed_delta.size() != layer_count) {
      throw Error(ErrorKind::InvalidSpec, "fixed_delta needs one entry per layer");
    }
    for (double d : fixed_delta) {
      if (!std::isfinite(d)) throw Error(ErrorKind::InvalidSpec, "fixed delta must be finite");
    }
  }
}

int QuantConfig::bits_for(std::size_t layer) const noexcept {
  return per_layer_bits.empty() ? bits : per_layer_bits[layer];
}

NetworkQuantization quantize_network(const ModelSpec& model,
                                     const std::vector<Tensor>& calibration,
                                     const QuantConfig& config) {
  model.validate();
  const std::size_t L = model.size();
  config.validate(L);
  if (calibration.size() != 1 && calibration.size() != L) {
    throw Error(ErrorKind::IncompatibleModel, "expected 1 shared calibration batch or " +
                                                  std::to_string(L) + " per-layer batches, got " +
                                                  std::to_string(calibration.size()));
  }
  const bool shared = calibration.size() == 1;

  NetworkQuantization result{model, {}};
  Tensor analog = calibration[0];
  Tensor quant = calibration[0];
  std::vector<bool> quantized_mask(L, false);

  for (std::size_t i = 0; i < L; ++i) {
    if (shared) {
      if (i > 0) {
        analog = forward_layer(analog, model.layers[i - 1]);
        quant = forward_layer(quant, result.model.layers[i - 1]);
      }
    } else {
      analog = forward_prefix(calibration[i], model, i);
      quant = forward_prefix(calibration[i], result.model, i);
    }

    const Layer& layer = model.layers[i];
    LayerReport rep;
    rep.index = i;
    rep.kind = layer_kind(layer);
    rep.quantized_prefix_layers = i;

    Matrix X, X_tilde;
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      if (analog.rank() != 4) {
        throw Error(ErrorKind::IncompatibleModel, "conv layer " + std::to_string(i) +
                                                      " needs 4-d input, got " +
                                                      shape_string(analog.shape));
      }
      const std::size_t blocks = (analog.shape[2] / conv->kernel_rows()) *
                                 (analog.shape[3] / conv->kernel_cols());
      const BlockSelection keep = select_blocks(analog.shape[0], blocks, config.sample_prob,
                                                derive_seed(config.seed, {i}));
      X = unfold_conv_input(analog, conv->kernel_rows(), conv->kernel_cols(), keep);
      X_tilde = unfold_conv_input(quant, conv->kernel_rows(), conv->kernel_cols(), keep);
    } else {
      X = analog.flatten_to_matrix();
      X_tilde = quant.flatten_to_matrix();
    }

    const Matrix W = weight_matrix(layer);
    if (X.cols() != W.rows()) {
      throw Error(ErrorKind::IncompatibleModel, "layer " + std::to_string(i) + " expects " +
                                                    std::to_string(W.rows()) +
                                                    " features, data has " +
                                                    std::to_string(X.cols()));
    }
    rep.samples = X.rows();
    rep.neurons = W.cols();

    Matrix Q = W;
    const bool quantize = !(config.last_layer_unquantized && i + 1 == L);
    if (quantize) {
      rep.quantized = true;
      rep.bits = config.bits_for(i);
      StepSize step = layer_step_size(W, config.C, rep.bits);
      if (!config.fixed_delta.empty() && config.fixed_delta[i] > 0.0) step.delta = config.fixed_delta[i];
      rep.delta = step.delta;
      if (step.delta > 0.0) {
        const Alphabet base(step.delta, step.K);
        Variant variant = config.variant;
        if (config.lambda_scale == LambdaScale::RelativeToQmax) variant.lambda *= base.q_max();
        if (variant.kind == VariantKind::Plain) variant.lambda = 0.0;
        rep.lambda = variant.lambda;
        const StepQuantizer quantizer = StepQuantizer::for_variant(base, variant);
        rep.q_max = quantizer.q_max();
        DenseQuantization dq = quantize_dense_layer(W, X, X_tilde, quantizer, {false, false});
        Q = std::move(dq.Q);

        const Matrix XW = matmul(X, W);
        double sum_rel = 0.0, sum_abs = 0.0;
        for (std::size_t j = 0; j < W.cols(); ++j) {
          double target = 0.0;
          for (std::size_t r = 0; r < XW.rows(); ++r) target += XW(r, j) * XW(r, j);
          const double res = dq.traces[j].final_residual_sqnorm;
          const double rel = target > 0.0 ? res / target : 0.0;
          sum_rel += rel;
          sum_abs += res;
          rep.max_relative_sq_residual = std::max(rep.max_relative_sq_residual, rel);
          if (dq.traces[j].weight_exceeds_qmax) ++rep.neurons_exceeding_qmax;
        }
        rep.mean_relative_sq_residual = sum_rel / static_cast<double>(W.cols());
        rep.mean_residual_sqnorm = sum_abs / static_cast<double>(W.cols());
      }
      rep.sparsity = sparsity(Q);
      quantized_mask[i] = true;
    }

    const bool correct = config.bias_correction &&
                         (config.bias_scope == BiasCorrectionScope::AllLayers || i + 1 == L);
    Layer& out_layer = result.model.layers[i];
    if (correct) {
      layer_bias(out_layer) = bias_correction(layer_bias(layer), X, W, X_tilde, Q);
      rep.bias_corrected = true;
    }
    if (quantize) set_weight_matrix(out_layer, Q);
    result.report.layers.push_back(rep);
  }

  result.report.sparsity = sparsity(result.model, quantized_mask);
  return result;
}

std::vector<double> bias_correction(std::span<const double> bias, const Matrix& X,
                                    const Matrix& W, const Matrix& Q) {
  return bias_correction(bias, X, W, X, Q);
}

std::vector<double> bias_correction(std::span<const double> bias, const Matrix& X,
                                    const Matrix& W, const Matrix& X_tilde, const Matrix& Q) {
  if (bias.size() != W.cols() || W.cols() != Q.cols() || W.rows() != Q.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "bias correction shapes");
  }
  const std::vector<double> analog = column_means(matmul(X, W));
  const std::vector<double> quantized = column_means(matmul(X_tilde, Q));
  std::vector<double> corrected(bias.begin(), bias.end());
  for (std::size_t j = 0; j < corrected.size(); ++j) corrected[j] += analog[j] - quantized[j];
  return corrected;
}

double sparsity(const Matrix& Q) noexcept {
  if (Q.empty()) return 1.0;
  const auto zeros = std::count(Q.storage().begin(), Q.storage().end(), 0.0);
  return static_cast<double>(zeros) / static_cast<double>(Q.size());
}

double sparsity(const ModelSpec& model, const std::vector<bool>& include) {
  std::size_t zeros = 0, total = 0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (i >= include.size() || !include[i]) continue;
    const Matrix W = weight_matrix(model.layers[i]);
    zeros += static_cast<std::size_t>(std::count(W.storage().begin(), W.storage().end(), 0.0));
    total += W.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

}  // namespace gpfq
