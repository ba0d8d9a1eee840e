#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace pp {

enum class Activation : std::uint8_t { Tanh = 0, Identity = 1 };

/// Row-major view of a `rows x cols` block. Activations are laid out one
/// feature per row and one sample per column so the batch loops are
/// contiguous.
struct ConstMatrixView {
  const double* data;
  std::size_t rows;
  std::size_t cols;
  const double* row(std::size_t r) const noexcept { return data + r * cols; }
};

struct MatrixView {
  double* data;
  std::size_t rows;
  std::size_t cols;
  double* row(std::size_t r) const noexcept { return data + r * cols; }
  operator ConstMatrixView() const noexcept { return {data, rows, cols}; }
};

/// tanh as used by the Tanh activation (vectorizable, within a few ulp of
/// std::tanh).
double tanh_activation(double x) noexcept;

/// Dot product with four interleaved accumulators combined in a fixed
/// order. Every kernel reduces through this so that the serial and OpenMP
/// variants agree bit for bit.
double fixed_order_dot(const double* a, const double* b, std::size_t n) noexcept;
double fixed_order_sum(const double* a, std::size_t n) noexcept;

// Reference kernels.
namespace serial {
/// out = act(weights * in + bias)
void dense_forward(ConstMatrixView weights, std::span<const double> bias, ConstMatrixView in,
                   MatrixView out, Activation act);
/// Turns d(loss)/d(out) into d(loss)/d(pre-activation), in place.
void activation_backward(ConstMatrixView out, MatrixView grad, Activation act);
/// grad_weights = grad_pre * in^T, grad_bias = row sums of grad_pre.
void dense_param_grad(ConstMatrixView grad_pre, ConstMatrixView in, MatrixView grad_weights,
                      std::span<double> grad_bias);
/// grad_in = weights^T * grad_pre
void dense_input_grad(ConstMatrixView weights, ConstMatrixView grad_pre, MatrixView grad_in);
}  // namespace serial

// Same contracts; batch tiles (or weight rows for the parameter gradient)
// are distributed across threads and every reduction keeps the reference
// order, so results match `serial` exactly.
namespace omp {
/// out = act(weights * in + bias)
void dense_forward(ConstMatrixView weights, std::span<const double> bias, ConstMatrixView in,
                   MatrixView out, Activation act);
/// Turns d(loss)/d(out) into d(loss)/d(pre-activation), in place.
void activation_backward(ConstMatrixView out, MatrixView grad, Activation act);
/// grad_weights = grad_pre * in^T, grad_bias = row sums of grad_pre.
void dense_param_grad(ConstMatrixView grad_pre, ConstMatrixView in, MatrixView grad_weights,
                      std::span<double> grad_bias);
/// grad_in = weights^T * grad_pre
void dense_input_grad(ConstMatrixView weights, ConstMatrixView grad_pre, MatrixView grad_in);
}  // namespace omp

}  // namespace pp
