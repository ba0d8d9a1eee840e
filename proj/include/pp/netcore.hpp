#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pp/dense_kernels.hpp"

namespace pp {

/// Owning row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double* row(std::size_t r) noexcept { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const noexcept { return data_.data() + r * cols_; }
  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  MatrixView view() noexcept { return {data_.data(), rows_, cols_}; }
  ConstMatrixView view() const noexcept { return {data_.data(), rows_, cols_}; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct DenseLayer {
  Matrix weights;  // out x in
  std::vector<double> bias;
  Activation activation = Activation::Identity;

  std::size_t in_width() const noexcept { return weights.cols(); }
  std::size_t out_width() const noexcept { return weights.rows(); }
  bool operator==(const DenseLayer&) const = default;
};

struct MLP {
  std::vector<DenseLayer> layers;

  std::size_t input_width() const noexcept { return layers.empty() ? 0 : layers.front().in_width(); }
  std::size_t output_width() const noexcept { return layers.empty() ? 0 : layers.back().out_width(); }
  std::size_t parameter_count() const noexcept;
  std::vector<std::size_t> widths() const;
  /// Weights then bias for each layer, in layer order.
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;

  void validate() const;
  bool operator==(const MLP&) const = default;
};

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
/// `activations` has one entry per layer (widths.size() - 1); BadWidths when
/// fewer than two widths or any width is zero.
MLP init_mlp(std::span<const std::size_t> widths, std::span<const Activation> activations, std::uint64_t seed);

/// Tanh on hidden layers, Identity on the output layer.
MLP init_mlp(std::span<const std::size_t> widths, std::uint64_t seed);

/// Weights and biases uniform in +-1/sqrt(fan_in); Tanh hidden, Identity
/// output. Spreads the hidden-unit offsets over the input range, which the
/// blend training starts from.
MLP init_mlp_fan_in(std::span<const std::size_t> widths, std::uint64_t seed);

/// Activations of every layer; `outputs[0]` is the input batch.
struct ForwardCache {
  std::vector<Matrix> outputs;
  const Matrix& result() const { return outputs.back(); }
};

struct LayerGrad {
  Matrix weights;
  std::vector<double> bias;
};

struct Gradients {
  std::vector<LayerGrad> layers;
  Matrix input;
  std::vector<std::span<const double>> blocks() const;
};

enum class Exec { Serial, Parallel };

/// Batch layout: one row per input feature, one column per sample.
ForwardCache forward(const MLP& mlp, Matrix inputs, Exec exec = Exec::Parallel);

/// Exact reverse-mode gradients given d(loss)/d(output) for the cached batch.
Gradients backward(const MLP& mlp, const ForwardCache& cache, Matrix output_grad, Exec exec = Exec::Parallel);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  /// Zero accumulators shaped like `params`.
  static AdamState for_blocks(std::span<const std::span<double>> params, double lr);
};

/// Bias-corrected Adam update applied in place.
void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state);

/// Frozen input normalization: TP' = log(1 + TP/s), VIMD' = (VIMD - m)/v.
struct Normalization {
  double tp_scale = 1.0;
  double vimd_mean = 0.0;
  double vimd_std = 1.0;
  bool operator==(const Normalization&) const = default;
};

/// Point-wise blend model: encoder (TP', VIMD') -> PP and decoder PP -> TP'.
struct PPModel {
  MLP encoder;
  MLP decoder;
  Normalization norm;

  void validate() const;
  bool operator==(const PPModel&) const = default;
};

std::vector<std::uint8_t> serialize_model(const PPModel& model);
PPModel parse_model(std::span<const std::uint8_t> bytes);
void save_model(const PPModel& model, const std::filesystem::path& path);
PPModel load_model(const std::filesystem::path& path);

}  // namespace pp
