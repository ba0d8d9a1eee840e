#include "pp/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "pp/error.hpp"

namespace pp {

namespace {

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};
using Buffer = std::unique_ptr<fftw_complex[], FftwFree>;

Buffer make_buffer(std::size_t n) {
  auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * std::max<std::size_t>(n, 1)));
  if (p == nullptr) throw std::bad_alloc();
  return Buffer(p);
}

// FFTW's planner is not reentrant; execution of an existing plan on fresh
// fftw_malloc'd arrays is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t rows, std::size_t cols, bool inverse) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(rows, cols, inverse);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    auto in = make_buffer(rows * cols);
    auto out = make_buffer(rows * cols);
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), in.get(), out.get(),
                                      inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, bool>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void require_even(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0 || rows % 2 != 0 || cols % 2 != 0) {
    throw Error(Errc::BadDimensions,
                "FFT needs even nonzero dimensions, got " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

std::vector<Complex> dft2(std::span<const Complex> data, std::size_t rows, std::size_t cols, bool inverse) {
  const std::size_t n = rows * cols;
  if (n == 0 || data.size() != n) throw Error(Errc::BadDimensions, "dft2 size mismatch");
  fftw_plan plan = plan_cache().get(rows, cols, inverse);
  auto in = make_buffer(n);
  auto out = make_buffer(n);
  std::memcpy(in.get(), data.data(), n * sizeof(Complex));
  fftw_execute_dft(plan, in.get(), out.get());
  std::vector<Complex> result(n);
  std::memcpy(static_cast<void*>(result.data()), out.get(), n * sizeof(Complex));
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& v : result) v *= scale;
  return result;
}

std::vector<Complex> fft2_real(std::span<const double> field, std::size_t rows, std::size_t cols) {
  require_even(rows, cols);
  if (field.size() != rows * cols) throw Error(Errc::BadDimensions, "field size != rows*cols");
  std::vector<Complex> c(field.begin(), field.end());
  return dft2(c, rows, cols, false);
}

std::vector<double> ifft2_real(std::span<const Complex> spectrum, std::size_t rows, std::size_t cols) {
  require_even(rows, cols);
  auto c = dft2(spectrum, rows, cols, true);
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

}  // namespace pp
