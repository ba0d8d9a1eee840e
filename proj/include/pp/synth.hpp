#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "pp/grid.hpp"

namespace pp {

/// Parameters of the synthetic TP/VIMD generator. Defaults give a dry
/// fraction near 84% and a heavy right tail.
struct SynthConfig {
  std::size_t nlat = 96;
  std::size_t nlon = 96;
  std::size_t nsteps = 2048;
  std::uint64_t seed = 20100101;
  double spectral_slope = 3.0;        // alpha > 1
  double correlation_length = 6.0;    // k0, cycles per domain
  double wet_threshold = 1.0;         // tau
  double tail_scale = 1.2;            // b
  double amplitude = 1.0;             // a, mm
  double vimd_mean = 0.0;             // mu
  double vimd_std = 1.0;              // sigma
  double tp_vimd_coupling = 0.8;      // rho in [0,1]
  double temporal_ar1 = 0.8;          // phi in [0,1)
  std::int64_t t0 = 1262304000;       // 2010-01-01T00:00Z

  void validate() const;
};

/// Zero-mean, unit-variance isotropic Gaussian field with spectrum
/// P(k) ~ (1 + (k/k0)^2)^(-alpha/2), k in cycles per domain. Deterministic in
/// `seed`; both dimensions must be at least 8.
std::vector<double> gaussian_random_field(std::size_t nlat, std::size_t nlon, double alpha, double k0,
                                          std::uint64_t seed);

struct SynthFields {
  GridSeries tp;
  GridSeries vimd;
};

SynthFields synth_tp_vimd(const SynthConfig& config);

/// Seed of the innovation field for (seed, stream, step), mixed with
/// splitmix64 so that steps can be generated in any order.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t step) noexcept;

namespace serial {
SynthFields synth_tp_vimd(const SynthConfig& config);
}

}  // namespace pp
