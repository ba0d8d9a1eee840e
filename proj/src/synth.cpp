#include "pp/synth.hpp"

#include <cmath>
#include <random>
#include <string>

#include "pp/error.hpp"
#include "pp/fft.hpp"

namespace pp {

namespace {

constexpr std::uint64_t kWetStream = 1;
constexpr std::uint64_t kAuxStream = 2;
constexpr std::size_t kBlock = 32;

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Latent {
  std::vector<double> wet;
  std::vector<double> aux;
};

Latent innovation(const SynthConfig& c, std::uint64_t step) {
  return {gaussian_random_field(c.nlat, c.nlon, c.spectral_slope, c.correlation_length,
                                derive_seed(c.seed, kWetStream, step)),
          gaussian_random_field(c.nlat, c.nlon, c.spectral_slope, c.correlation_length,
                                derive_seed(c.seed, kAuxStream, step))};
}

// Advances the AR(1) latent state by one innovation and emits TP/VIMD.
void advance(const SynthConfig& c, bool first, const Latent& innov, Latent& state, std::vector<float>& tp,
             std::vector<float>& vimd) {
  const double phi = c.temporal_ar1;
  const double drive = std::sqrt(1.0 - phi * phi);
  const double rho = c.tp_vimd_coupling;
  const double indep = std::sqrt(1.0 - rho * rho);
  const std::size_t n = c.nlat * c.nlon;
  if (first) {
    state = innov;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      state.wet[i] = phi * state.wet[i] + drive * innov.wet[i];
      state.aux[i] = phi * state.aux[i] + drive * innov.aux[i];
    }
  }
  tp.resize(n);
  vimd.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double zw = state.wet[i];
    double excess = zw - c.wet_threshold;
    tp[i] = excess > 0.0 ? static_cast<float>(c.amplitude * std::expm1(c.tail_scale * excess)) : 0.0f;
    vimd[i] = static_cast<float>(c.vimd_mean + c.vimd_std * (-rho * zw + indep * state.aux[i]));
  }
}

Geometry synth_geometry(const SynthConfig& c, FieldKind kind) {
  // 0.25 degree grid anchored at the north-west corner of a European box.
  return Geometry::regular(kind, c.nlat, c.nlon, 71.0, -10.0, 0.25);
}

template <bool Parallel>
SynthFields generate(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.nlat * config.nlon;
  std::vector<std::vector<float>> tp(config.nsteps), vimd(config.nsteps);
  Latent state;
  std::vector<Latent> block(kBlock);
  for (std::size_t start = 0; start < config.nsteps; start += kBlock) {
    const std::size_t count = std::min(kBlock, config.nsteps - start);
    if constexpr (Parallel) {
      // Innovations depend only on (seed, step); the recursion stays serial.
      std::exception_ptr failure;
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(count); ++k) {
        try {
          block[static_cast<std::size_t>(k)] = innovation(config, start + static_cast<std::size_t>(k));
        } catch (...) {
#pragma omp critical
          failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
    } else {
      for (std::size_t k = 0; k < count; ++k) block[k] = innovation(config, start + k);
    }
    for (std::size_t k = 0; k < count; ++k) {
      advance(config, start + k == 0, block[k], state, tp[start + k], vimd[start + k]);
    }
  }
  (void)n;
  return {GridSeries(synth_geometry(config, FieldKind::TP), config.t0, std::move(tp)),
          GridSeries(synth_geometry(config, FieldKind::VIMD), config.t0, std::move(vimd))};
}

}  // namespace

void SynthConfig::validate() const {
  if (nlat < 8 || nlon < 8) throw Error(Errc::TooSmallGrid, "synthetic grid must be at least 8x8");
  if (nsteps == 0) throw Error(Errc::BadConfig, "nsteps must be positive");
  if (!(spectral_slope > 1.0)) throw Error(Errc::BadConfig, "spectral_slope must exceed 1");
  if (!(correlation_length > 0.0)) throw Error(Errc::BadConfig, "correlation_length must be positive");
  if (!(tail_scale > 0.0)) throw Error(Errc::BadConfig, "tail_scale must be positive");
  if (!(amplitude > 0.0)) throw Error(Errc::BadConfig, "amplitude must be positive");
  if (!(tp_vimd_coupling >= 0.0 && tp_vimd_coupling <= 1.0))
    throw Error(Errc::BadConfig, "tp_vimd_coupling must lie in [0,1]");
  if (!(temporal_ar1 >= 0.0 && temporal_ar1 < 1.0))
    throw Error(Errc::BadConfig, "temporal_ar1 must lie in [0,1)");
  if (!std::isfinite(wet_threshold) || !std::isfinite(vimd_mean) || !(vimd_std >= 0.0))
    throw Error(Errc::BadConfig, "wet_threshold, vimd_mean, vimd_std must be finite (std >= 0)");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t step) noexcept {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ step);
}

std::vector<double> gaussian_random_field(std::size_t nlat, std::size_t nlon, double alpha, double k0,
                                          std::uint64_t seed) {
  if (nlat < 8 || nlon < 8)
    throw Error(Errc::TooSmallGrid, "field " + std::to_string(nlat) + "x" + std::to_string(nlon) + " below 8x8");
  const std::size_t n = nlat * nlon;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Complex> white(n);
  for (auto& w : white) w = normal(rng);

  auto spec = dft2(white, nlat, nlon, false);
  for (std::size_t i = 0; i < nlat; ++i) {
    const double ky = static_cast<double>(signed_frequency(i, nlat));
    for (std::size_t j = 0; j < nlon; ++j) {
      const double kx = static_cast<double>(signed_frequency(j, nlon));
      const double k2 = (kx * kx + ky * ky) / (k0 * k0);
      spec[i * nlon + j] *= (i == 0 && j == 0) ? 0.0 : std::pow(1.0 + k2, -alpha / 4.0);
    }
  }
  auto field = dft2(spec, nlat, nlon, true);

  std::vector<double> out(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = field[i].real();
    mean += out[i];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (auto& v : out) {
    v -= mean;
    var += v * v;
  }
  const double sd = std::sqrt(var / static_cast<double>(n));
  for (auto& v : out) v /= sd;
  return out;
}

SynthFields synth_tp_vimd(const SynthConfig& config) { return generate<true>(config); }

namespace serial {
SynthFields synth_tp_vimd(const SynthConfig& config) { return generate<false>(config); }
}  // namespace serial

}  // namespace pp
