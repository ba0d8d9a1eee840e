#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pp/fft.hpp"
#include "pp/grid.hpp"

namespace pp {

enum class Taper { BrickWall, RaisedCosine };

/// Radial low-pass filter. `cutoff` is a fraction of the Nyquist radius;
/// for RaisedCosine the transition occupies [cutoff*(1-taper_width), cutoff].
/// A BrickWall with cutoff 1 passes every bin, including the corners beyond
/// the Nyquist circle. `pad` cells of mirror padding are added on each side
/// before the transform.
struct LowpassSpec {
  double cutoff = 1.0;
  Taper taper = Taper::RaisedCosine;
  double taper_width = 0.2;
  std::size_t pad = 8;

  void validate() const;
};

/// Filter response at normalized radius r (1 = Nyquist).
double taper_response(const LowpassSpec& spec, double r) noexcept;

/// Row-major `rows x cols` real field, low-passed. Linear in the input.
/// BadDimensions when the padded dimensions are odd.
std::vector<double> lowpass(std::span<const double> field, std::size_t rows, std::size_t cols, const LowpassSpec& spec);
GeoGrid lowpass(const GeoGrid& grid, const LowpassSpec& spec);

/// Applies `lowpass` to every step (masked cells are filled with the step
/// mean before filtering and remain masked).
GridSeries lowpass_series(const GridSeries& series, const LowpassSpec& spec);

/// High/low resolution pair; `lr` is `hr` low-passed at 1/factor of
/// Nyquist and sampled every `factor` cells starting at the first.
struct PairSet {
  GridSeries hr;
  GridSeries lr;
  std::size_t factor;
};

/// BadFactor when factor is 0 or does not divide both grid dimensions.
PairSet make_pairs(const GridSeries& hr, std::size_t factor, const LowpassSpec& spec);

/// Spectral upsampling by zero-padding the centered spectrum (periodic
/// band-limited interpolation). Used to check the sampling of `make_pairs`.
std::vector<double> fourier_upsample(std::span<const double> field, std::size_t rows, std::size_t cols,
                                     std::size_t factor);

struct GibbsReport {
  double negative_cell_fraction = 0.0;
  double max_overshoot_ratio = 0.0;
  double dry_region_ringing_energy = 0.0;
};

/// Artifact measures of `filtered` against `original` (same layout).
/// Negative cells are counted below -1e-6 and only for TP originals; dry
/// ringing is measured where the original is zero more than two cells
/// (Chebyshev distance) away from any wet cell.
GibbsReport gibbs_metrics(const GeoGrid& original, const GeoGrid& filtered);

/// Pooled over steps: negative fraction and dry energy are cell-weighted,
/// the overshoot ratio is the largest per-step value.
GibbsReport gibbs_metrics(const GridSeries& original, const GridSeries& filtered);

/// Brick-wall truncation of a periodic 0/1 square wave of `length` samples
/// (two jumps) at `cutoff` of Nyquist; returns (max - 1) / jump.
double step_overshoot(std::size_t length, double cutoff);

inline constexpr double kNegativeTolerance = 1e-6;
inline constexpr std::size_t kWetDilation = 2;

namespace serial {
GridSeries lowpass_series(const GridSeries& series, const LowpassSpec& spec);
}

}  // namespace pp
