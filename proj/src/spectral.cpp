#include "pp/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pp/error.hpp"

namespace pp {

namespace {

std::size_t mirror(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t k = i % period;
  if (k < 0) k += period;
  return k < static_cast<std::ptrdiff_t>(n) ? static_cast<std::size_t>(k)
                                             : static_cast<std::size_t>(period - 1 - k);
}

std::vector<double> filled_step(const GridSeries& series, std::size_t s) {
  const auto& g = series.geometry();
  auto src = series.step(s);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < src.size(); ++c) {
    if (g.valid(c)) {
      sum += src[c];
      ++n;
    }
  }
  const double fill = n > 0 ? sum / static_cast<double>(n) : 0.0;
  std::vector<double> out(src.size());
  for (std::size_t c = 0; c < src.size(); ++c) out[c] = g.valid(c) ? static_cast<double>(src[c]) : fill;
  return out;
}

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

template <bool Parallel>
GridSeries lowpass_series_impl(const GridSeries& series, const LowpassSpec& spec) {
  spec.validate();
  std::vector<std::vector<float>> out(series.size());
  if constexpr (Parallel) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(series.size()); ++s) {
      try {
        const auto i = static_cast<std::size_t>(s);
        out[i] = to_float(lowpass(filled_step(series, i), series.nlat(), series.nlon(), spec));
      } catch (...) {
#pragma omp critical
        failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t s = 0; s < series.size(); ++s)
      out[s] = to_float(lowpass(filled_step(series, s), series.nlat(), series.nlon(), spec));
  }
  return GridSeries::signed_estimate(series.geometry_ptr(), series.t0(), std::move(out));
}

// Positions of LR frequency bin `i` (of `n`) in an upsampled axis of
// length `big`; an even-length Nyquist bin is split between +/- n/2.
struct Target {
  std::size_t index[2];
  double weight[2];
  int count;
};

Target upsample_target(std::size_t i, std::size_t n, std::size_t big) {
  const long k = signed_frequency(i, n);
  auto pos = [&](long f) { return static_cast<std::size_t>(f >= 0 ? f : static_cast<long>(big) + f); };
  if (n % 2 == 0 && static_cast<std::size_t>(std::labs(k)) == n / 2) {
    const long h = static_cast<long>(n / 2);
    return {{pos(h), pos(-h)}, {0.5, 0.5}, 2};
  }
  return {{pos(k), 0}, {1.0, 0.0}, 1};
}

}  // namespace

void LowpassSpec::validate() const {
  if (!(cutoff > 0.0 && cutoff <= 1.0)) throw Error(Errc::BadConfig, "cutoff must lie in (0,1]");
  if (!(taper_width >= 0.0 && taper_width <= 1.0)) throw Error(Errc::BadConfig, "taper_width must lie in [0,1]");
}

double taper_response(const LowpassSpec& spec, double r) noexcept {
  if (spec.taper == Taper::BrickWall) {
    if (spec.cutoff >= 1.0) return 1.0;
    return r <= spec.cutoff ? 1.0 : 0.0;
  }
  const double width = spec.taper_width * spec.cutoff;
  const double start = spec.cutoff - width;
  if (r <= start) return 1.0;
  if (r >= spec.cutoff) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (r - start) / width));
}

std::vector<double> lowpass(std::span<const double> field, std::size_t rows, std::size_t cols,
                            const LowpassSpec& spec) {
  spec.validate();
  if (field.size() != rows * cols || rows == 0 || cols == 0)
    throw Error(Errc::BadDimensions, "field size does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  const std::size_t pr = rows + 2 * spec.pad;
  const std::size_t pc = cols + 2 * spec.pad;
  if (pr % 2 != 0 || pc % 2 != 0)
    throw Error(Errc::BadDimensions, "padded field " + std::to_string(pr) + "x" + std::to_string(pc) + " is not even");

  std::vector<double> padded(pr * pc);
  const auto pad = static_cast<std::ptrdiff_t>(spec.pad);
  for (std::size_t i = 0; i < pr; ++i) {
    const std::size_t si = mirror(static_cast<std::ptrdiff_t>(i) - pad, rows);
    for (std::size_t j = 0; j < pc; ++j)
      padded[i * pc + j] = field[si * cols + mirror(static_cast<std::ptrdiff_t>(j) - pad, cols)];
  }

  auto spectrum = fft2_real(padded, pr, pc);
  for (std::size_t i = 0; i < pr; ++i) {
    const double fy = 2.0 * static_cast<double>(signed_frequency(i, pr)) / static_cast<double>(pr);
    for (std::size_t j = 0; j < pc; ++j) {
      const double fx = 2.0 * static_cast<double>(signed_frequency(j, pc)) / static_cast<double>(pc);
      spectrum[i * pc + j] *= taper_response(spec, std::hypot(fy, fx));
    }
  }
  auto filtered = ifft2_real(spectrum, pr, pc);

  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(filtered.begin() + static_cast<std::ptrdiff_t>((i + spec.pad) * pc + spec.pad), cols,
                out.begin() + static_cast<std::ptrdiff_t>(i * cols));
  return out;
}

GeoGrid lowpass(const GeoGrid& grid, const LowpassSpec& spec) {
  return {grid.geometry, lowpass(grid.values, grid.nlat(), grid.nlon(), spec)};
}

GridSeries lowpass_series(const GridSeries& series, const LowpassSpec& spec) {
  return lowpass_series_impl<true>(series, spec);
}

namespace serial {
GridSeries lowpass_series(const GridSeries& series, const LowpassSpec& spec) {
  return lowpass_series_impl<false>(series, spec);
}
}  // namespace serial

PairSet make_pairs(const GridSeries& hr, std::size_t factor, const LowpassSpec& spec) {
  if (factor == 0 || hr.nlat() % factor != 0 || hr.nlon() % factor != 0)
    throw Error(Errc::BadFactor, "factor " + std::to_string(factor) + " does not divide " +
                                     std::to_string(hr.nlat()) + "x" + std::to_string(hr.nlon()));
  LowpassSpec band = spec;
  band.cutoff = 1.0 / static_cast<double>(factor);
  GridSeries filtered = lowpass_series(hr, band);

  const auto& g = hr.geometry();
  Geometry lg;
  lg.kind = g.kind;
  for (std::size_t i = 0; i < g.nlat(); i += factor) lg.lat.push_back(g.lat[i]);
  for (std::size_t j = 0; j < g.nlon(); j += factor) lg.lon.push_back(g.lon[j]);
  for (std::size_t i = 0; i < g.nlat(); i += factor)
    for (std::size_t j = 0; j < g.nlon(); j += factor) lg.mask.push_back(g.mask[i * g.nlon() + j]);

  std::vector<std::vector<float>> lr(hr.size());
  for (std::size_t s = 0; s < hr.size(); ++s) {
    auto src = filtered.step(s);
    auto& dst = lr[s];
    dst.reserve(lg.cells());
    for (std::size_t i = 0; i < g.nlat(); i += factor)
      for (std::size_t j = 0; j < g.nlon(); j += factor) dst.push_back(src[i * g.nlon() + j]);
  }
  return {hr, GridSeries::signed_estimate(std::move(lg), hr.t0(), std::move(lr)), factor};
}

std::vector<double> fourier_upsample(std::span<const double> field, std::size_t rows, std::size_t cols,
                                     std::size_t factor) {
  if (factor == 0) throw Error(Errc::BadFactor, "factor must be positive");
  if (field.size() != rows * cols) throw Error(Errc::BadDimensions, "field size mismatch");
  std::vector<Complex> in(field.begin(), field.end());
  auto spec = dft2(in, rows, cols, false);
  const std::size_t br = rows * factor;
  const std::size_t bc = cols * factor;
  std::vector<Complex> big(br * bc, Complex{0.0, 0.0});
  for (std::size_t i = 0; i < rows; ++i) {
    const Target ti = upsample_target(i, rows, br);
    for (std::size_t j = 0; j < cols; ++j) {
      const Target tj = upsample_target(j, cols, bc);
      for (int a = 0; a < ti.count; ++a)
        for (int b = 0; b < tj.count; ++b)
          big[ti.index[a] * bc + tj.index[b]] += spec[i * cols + j] * (ti.weight[a] * tj.weight[b]);
    }
  }
  auto out = dft2(big, br, bc, true);
  std::vector<double> result(out.size());
  const double scale = static_cast<double>(factor);
  for (std::size_t k = 0; k < out.size(); ++k) result[k] = out[k].real() * scale;
  return result;
}

namespace {

struct GibbsAccum {
  std::size_t eligible = 0;
  std::size_t negative = 0;
  double overshoot = 0.0;
  std::size_t dry_cells = 0;
  double dry_energy = 0.0;
};

void accumulate(const GeoGrid& original, const GeoGrid& filtered, GibbsAccum& acc) {
  const auto& g = original.geometry;
  if (!g.same_layout(filtered.geometry) || original.values.size() != filtered.values.size())
    throw Error(Errc::GeometryMismatch, "original and filtered grids differ in layout");
  const std::size_t rows = g.nlat(), cols = g.nlon();
  const auto& o = original.values;
  const auto& f = filtered.values;

  double omax = -std::numeric_limits<double>::infinity(), omin = std::numeric_limits<double>::infinity();
  double fmax = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < o.size(); ++c) {
    if (!g.valid(c)) continue;
    omax = std::max(omax, o[c]);
    omin = std::min(omin, o[c]);
    fmax = std::max(fmax, f[c]);
  }
  const double range = omax - omin;
  if (range > 0.0) acc.overshoot = std::max(acc.overshoot, std::max(0.0, (fmax - omax) / range));

  if (g.kind == FieldKind::TP) {
    for (std::size_t c = 0; c < o.size(); ++c) {
      if (!g.valid(c) || o[c] < 0.0) continue;
      ++acc.eligible;
      if (f[c] < -kNegativeTolerance) ++acc.negative;
    }
  }

  // Wet cells dilated by a (2d+1)^2 square.
  std::vector<std::uint8_t> near_wet(o.size(), 0);
  const auto d = static_cast<std::ptrdiff_t>(kWetDilation);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (!(g.valid(i * cols + j) && o[i * cols + j] > 0.0)) continue;
      for (std::ptrdiff_t di = -d; di <= d; ++di) {
        for (std::ptrdiff_t dj = -d; dj <= d; ++dj) {
          const auto ii = static_cast<std::ptrdiff_t>(i) + di;
          const auto jj = static_cast<std::ptrdiff_t>(j) + dj;
          if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(rows) || jj >= static_cast<std::ptrdiff_t>(cols))
            continue;
          near_wet[static_cast<std::size_t>(ii) * cols + static_cast<std::size_t>(jj)] = 1;
        }
      }
    }
  }
  for (std::size_t c = 0; c < o.size(); ++c) {
    if (!g.valid(c) || o[c] != 0.0 || near_wet[c]) continue;
    ++acc.dry_cells;
    acc.dry_energy += f[c] * f[c];
  }
}

GibbsReport finish(const GibbsAccum& acc) {
  GibbsReport r;
  r.negative_cell_fraction = acc.eligible ? static_cast<double>(acc.negative) / static_cast<double>(acc.eligible) : 0.0;
  r.max_overshoot_ratio = acc.overshoot;
  r.dry_region_ringing_energy = acc.dry_cells ? acc.dry_energy / static_cast<double>(acc.dry_cells) : 0.0;
  return r;
}

}  // namespace

GibbsReport gibbs_metrics(const GeoGrid& original, const GeoGrid& filtered) {
  GibbsAccum acc;
  accumulate(original, filtered, acc);
  return finish(acc);
}

GibbsReport gibbs_metrics(const GridSeries& original, const GridSeries& filtered) {
  if (original.size() != filtered.size())
    throw Error(Errc::GeometryMismatch, "series lengths differ");
  GibbsAccum acc;
  for (std::size_t s = 0; s < original.size(); ++s) accumulate(original.grid(s), filtered.grid(s), acc);
  return finish(acc);
}

double step_overshoot(std::size_t length, double cutoff) {
  if (length < 16 || length % 2 != 0) throw Error(Errc::BadDimensions, "step length must be even and at least 16");
  // Two identical rows keep the padded shape even; the row direction carries
  // no signal.
  std::vector<double> field(2 * length, 0.0);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = length / 2; j < length; ++j) field[r * length + j] = 1.0;
  const auto out = lowpass(field, 2, length, LowpassSpec{cutoff, Taper::BrickWall, 0.0, 0});
  return *std::max_element(out.begin(), out.end()) - 1.0;
}

}  // namespace pp
