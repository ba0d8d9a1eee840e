#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace pp {

using Complex = std::complex<double>;

/// Unitary 2-D DFT of a row-major `rows x cols` array: both directions are
/// scaled by 1/sqrt(rows*cols), so the pair is an isometry. Any size is
/// accepted. Thread safe; plans are cached per (rows, cols, direction).
std::vector<Complex> dft2(std::span<const Complex> data, std::size_t rows, std::size_t cols,
                          bool inverse);

/// Forward transform of a real field. Dimensions must be even and nonzero
/// (BadDimensions otherwise).
std::vector<Complex> fft2_real(std::span<const double> field, std::size_t rows, std::size_t cols);

/// Inverse transform returning the real part.
std::vector<double> ifft2_real(std::span<const Complex> spectrum, std::size_t rows, std::size_t cols);

/// Signed integer frequency of DFT bin `i` out of `n` (numpy fftfreq * n).
inline long signed_frequency(std::size_t i, std::size_t n) noexcept {
  return i <= (n - 1) / 2 ? static_cast<long>(i) : static_cast<long>(i) - static_cast<long>(n);
}

}  // namespace pp
