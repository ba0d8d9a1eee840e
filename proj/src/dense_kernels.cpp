#include "pp/dense_kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

namespace pp {

double fixed_order_dot(const double* a, const double* b, std::size_t n) noexcept {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    acc0 += a[k] * b[k];
    acc1 += a[k + 1] * b[k + 1];
    acc2 += a[k + 2] * b[k + 2];
    acc3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) acc0 += a[k] * b[k];
  return (acc0 + acc1) + (acc2 + acc3);
}

double fixed_order_sum(const double* a, std::size_t n) noexcept {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    acc0 += a[k];
    acc1 += a[k + 1];
    acc2 += a[k + 2];
    acc3 += a[k + 3];
  }
  for (; k < n; ++k) acc0 += a[k];
  return (acc0 + acc1) + (acc2 + acc3);
}

namespace {

// tanh(x) = -m / (m + 2) with m = expm1(-2|x|), sign restored. expm1 uses
// Cody-Waite reduction y = n ln2 + r, |r| <= ln2/2, and a degree-13 Taylor
// polynomial; 2^n is assembled from the exponent bits. Branch free so the
// tile loops vectorize.
inline double tanh_kernel(double x) noexcept {
  constexpr double kInvLn2 = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShifter = 6755399441055744.0;  // 1.5 * 2^52
  const double ax = std::fabs(x) < 20.0 ? std::fabs(x) : 20.0;
  const double y = -2.0 * ax;
  const double kd = y * kInvLn2 + kShifter;
  const double n = kd - kShifter;
  const double r = (y - n * kLn2Hi) - n * kLn2Lo;
  double p = r * (1.0 / 6227020800.0) + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  const double em1_r = r + r * r * p;  // expm1(r)
  const auto bits = std::bit_cast<std::uint64_t>(kd);
  const double scale = std::bit_cast<double>((bits + 1023) << 52);  // 2^n
  const double m = scale * em1_r + (scale - 1.0);
  const double t = -m / (m + 2.0);
  return std::copysign(t, x);
}

// Same arithmetic as tanh_kernel on four lanes at once (the scalar path
// handles tails, so both give identical bits). Casts between the two
// vector types reinterpret the lanes.
using Lanes = double __attribute__((vector_size(32)));
using LaneBits = std::uint64_t __attribute__((vector_size(32)));

inline Lanes load_lanes(const double* p) noexcept {
  Lanes v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store_lanes(double* p, Lanes v) noexcept { std::memcpy(p, &v, sizeof v); }

inline Lanes tanh_lanes(Lanes x) noexcept {
  constexpr double kInvLn2 = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShifter = 6755399441055744.0;
  constexpr std::uint64_t kSign = 0x8000000000000000ULL;
  const LaneBits xb = (LaneBits)x;
  const LaneBits sign = xb & kSign;
  const LaneBits abs_bits = xb & ~kSign;
  Lanes ax = (Lanes)abs_bits;
  ax = ax < 20.0 ? ax : Lanes{20.0, 20.0, 20.0, 20.0};
  const Lanes y = -2.0 * ax;
  const Lanes kd = y * kInvLn2 + kShifter;
  const Lanes n = kd - kShifter;
  const Lanes r = (y - n * kLn2Hi) - n * kLn2Lo;
  Lanes p = r * (1.0 / 6227020800.0) + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  const Lanes em1_r = r + r * r * p;
  const LaneBits scale_bits = ((LaneBits)kd + 1023) << 52;
  const Lanes scale = (Lanes)scale_bits;
  const Lanes m = scale * em1_r + (scale - 1.0);
  const Lanes t = -m / (m + 2.0);
  const LaneBits out = (LaneBits)t | sign;
  return (Lanes)out;
}

void tanh_inplace(double* y, std::size_t n) noexcept {
  std::size_t b = 0;
  for (; b + 4 <= n; b += 4) store_lanes(y + b, tanh_lanes(load_lanes(y + b)));
  for (; b < n; ++b) y[b] = tanh_kernel(y[b]);
}

// Batch columns are processed in tiles that keep the active input rows in
// cache. Every output element is still reduced in the reference order, so
// tiling and the thread split never change a result.
constexpr std::size_t kTile = 256;

using Index = std::int64_t;

std::size_t tile_count(std::size_t cols) noexcept { return (cols + kTile - 1) / kTile; }

void forward_tile(ConstMatrixView w, std::span<const double> bias, ConstMatrixView in, MatrixView out,
                  Activation act, std::size_t t) {
  const std::size_t c0 = t * kTile;
  const std::size_t c1 = std::min(in.cols, c0 + kTile);
  std::size_t o = 0;
  for (; o + 4 <= w.rows; o += 4) {
    double* y0 = out.row(o);
    double* y1 = out.row(o + 1);
    double* y2 = out.row(o + 2);
    double* y3 = out.row(o + 3);
    for (std::size_t b = c0; b < c1; ++b) {
      y0[b] = bias[o];
      y1[b] = bias[o + 1];
      y2[b] = bias[o + 2];
      y3[b] = bias[o + 3];
    }
    for (std::size_t i = 0; i < in.rows; ++i) {
      const double w0 = w.row(o)[i], w1 = w.row(o + 1)[i], w2 = w.row(o + 2)[i], w3 = w.row(o + 3)[i];
      const double* x = in.row(i);
      for (std::size_t b = c0; b < c1; ++b) {
        const double xb = x[b];
        y0[b] += w0 * xb;
        y1[b] += w1 * xb;
        y2[b] += w2 * xb;
        y3[b] += w3 * xb;
      }
    }
  }
  for (; o < w.rows; ++o) {
    double* y = out.row(o);
    for (std::size_t b = c0; b < c1; ++b) y[b] = bias[o];
    for (std::size_t i = 0; i < in.rows; ++i) {
      const double wi = w.row(o)[i];
      const double* x = in.row(i);
      for (std::size_t b = c0; b < c1; ++b) y[b] += wi * x[b];
    }
  }
  if (act == Activation::Tanh) {
    for (std::size_t r = 0; r < w.rows; ++r) {
      double* y = out.row(r);
      tanh_inplace(y + c0, c1 - c0);
    }
  }
}

void activation_tile(ConstMatrixView out, MatrixView grad, Activation act, std::size_t t) {
  if (act == Activation::Identity) return;
  const std::size_t c0 = t * kTile;
  const std::size_t c1 = std::min(out.cols, c0 + kTile);
  for (std::size_t o = 0; o < out.rows; ++o) {
    const double* y = out.row(o);
    double* g = grad.row(o);
    for (std::size_t b = c0; b < c1; ++b) g[b] *= 1.0 - y[b] * y[b];
  }
}

void input_grad_tile(ConstMatrixView w, ConstMatrixView grad_pre, MatrixView grad_in, std::size_t t) {
  const std::size_t c0 = t * kTile;
  const std::size_t c1 = std::min(grad_pre.cols, c0 + kTile);
  std::size_t i = 0;
  for (; i + 4 <= grad_in.rows; i += 4) {
    double* g0 = grad_in.row(i);
    double* g1 = grad_in.row(i + 1);
    double* g2 = grad_in.row(i + 2);
    double* g3 = grad_in.row(i + 3);
    for (std::size_t b = c0; b < c1; ++b) g0[b] = g1[b] = g2[b] = g3[b] = 0.0;
    for (std::size_t o = 0; o < w.rows; ++o) {
      const double* wr = w.row(o);
      const double w0 = wr[i], w1 = wr[i + 1], w2 = wr[i + 2], w3 = wr[i + 3];
      const double* g = grad_pre.row(o);
      for (std::size_t b = c0; b < c1; ++b) {
        const double gb = g[b];
        g0[b] += w0 * gb;
        g1[b] += w1 * gb;
        g2[b] += w2 * gb;
        g3[b] += w3 * gb;
      }
    }
  }
  for (; i < grad_in.rows; ++i) {
    double* gi = grad_in.row(i);
    for (std::size_t b = c0; b < c1; ++b) gi[b] = 0.0;
    for (std::size_t o = 0; o < w.rows; ++o) {
      const double wo = w.row(o)[i];
      const double* g = grad_pre.row(o);
      for (std::size_t b = c0; b < c1; ++b) gi[b] += wo * g[b];
    }
  }
}

// Weight gradient of output row `o`: the same four-lane reduction as
// fixed_order_dot (lane l takes indices l mod 4, the tail goes to lane 0),
// walked tile by tile so the input rows stay cached.
void param_grad_row(ConstMatrixView grad_pre, ConstMatrixView in, MatrixView grad_w,
                    std::span<double> grad_b, std::size_t o) {
  const std::size_t n = in.cols;
  const std::size_t full = n / 4 * 4;
  const double* g = grad_pre.row(o);
  std::vector<Lanes> acc(in.rows, Lanes{0.0, 0.0, 0.0, 0.0});
  for (std::size_t c0 = 0; c0 < full; c0 += kTile) {
    const std::size_t c1 = std::min(full, c0 + kTile);
    std::size_t i = 0;
    for (; i + 2 <= in.rows; i += 2) {
      const double* x0 = in.row(i);
      const double* x1 = in.row(i + 1);
      Lanes a0 = acc[i], a1 = acc[i + 1];
      for (std::size_t k = c0; k < c1; k += 4) {
        const Lanes gk = load_lanes(g + k);
        a0 += gk * load_lanes(x0 + k);
        a1 += gk * load_lanes(x1 + k);
      }
      acc[i] = a0;
      acc[i + 1] = a1;
    }
    for (; i < in.rows; ++i) {
      const double* x = in.row(i);
      Lanes a = acc[i];
      for (std::size_t k = c0; k < c1; k += 4) a += load_lanes(g + k) * load_lanes(x + k);
      acc[i] = a;
    }
  }
  double* gw = grad_w.row(o);
  for (std::size_t i = 0; i < in.rows; ++i) {
    const double* x = in.row(i);
    double a0 = acc[i][0];
    for (std::size_t k = full; k < n; ++k) a0 += g[k] * x[k];
    gw[i] = (a0 + acc[i][1]) + (acc[i][2] + acc[i][3]);
  }
  grad_b[o] = fixed_order_sum(g, grad_pre.cols);
}

}  // namespace

double tanh_activation(double x) noexcept { return tanh_kernel(x); }

namespace serial {

void dense_forward(ConstMatrixView weights, std::span<const double> bias, ConstMatrixView in, MatrixView out,
                   Activation act) {
  for (std::size_t t = 0; t < tile_count(in.cols); ++t) forward_tile(weights, bias, in, out, act, t);
}

void activation_backward(ConstMatrixView out, MatrixView grad, Activation act) {
  for (std::size_t t = 0; t < tile_count(out.cols); ++t) activation_tile(out, grad, act, t);
}

void dense_param_grad(ConstMatrixView grad_pre, ConstMatrixView in, MatrixView grad_weights,
                      std::span<double> grad_bias) {
  for (std::size_t o = 0; o < grad_pre.rows; ++o) param_grad_row(grad_pre, in, grad_weights, grad_bias, o);
}

void dense_input_grad(ConstMatrixView weights, ConstMatrixView grad_pre, MatrixView grad_in) {
  for (std::size_t t = 0; t < tile_count(grad_pre.cols); ++t) input_grad_tile(weights, grad_pre, grad_in, t);
}

}  // namespace serial

namespace omp {

void dense_forward(ConstMatrixView weights, std::span<const double> bias, ConstMatrixView in, MatrixView out,
                   Activation act) {
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(tile_count(in.cols)); ++t)
    forward_tile(weights, bias, in, out, act, static_cast<std::size_t>(t));
}

void activation_backward(ConstMatrixView out, MatrixView grad, Activation act) {
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(tile_count(out.cols)); ++t)
    activation_tile(out, grad, act, static_cast<std::size_t>(t));
}

void dense_param_grad(ConstMatrixView grad_pre, ConstMatrixView in, MatrixView grad_weights,
                      std::span<double> grad_bias) {
#pragma omp parallel for schedule(static)
  for (Index o = 0; o < static_cast<Index>(grad_pre.rows); ++o)
    param_grad_row(grad_pre, in, grad_weights, grad_bias, static_cast<std::size_t>(o));
}

void dense_input_grad(ConstMatrixView weights, ConstMatrixView grad_pre, MatrixView grad_in) {
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(tile_count(grad_pre.cols)); ++t)
    input_grad_tile(weights, grad_pre, grad_in, static_cast<std::size_t>(t));
}

}  // namespace omp

}  // namespace pp
