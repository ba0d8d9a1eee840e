#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "pp/error.hpp"
#include "pp/synth.hpp"

using namespace pp;

namespace {

double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Separable naive DFT power |F(ky, kx)|^2 of a real n x n field.
std::vector<double> naive_power(const std::vector<double>& f, std::size_t n) {
  std::vector<std::complex<double>> tw(n), rows(n * n), out(n * n);
  for (std::size_t k = 0; k < n; ++k) tw[k] = std::polar(1.0, -2.0 * std::numbers::pi * k / n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += f[i * n + j] * tw[(k * j) % n];
      rows[i * n + k] = s;
    }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) {
      std::complex<double> s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += rows[i * n + l] * tw[(k * i) % n];
      out[k * n + l] = s;
    }
  std::vector<double> p(n * n);
  for (std::size_t i = 0; i < n * n; ++i) p[i] = std::norm(out[i]);
  return p;
}

SynthConfig small(std::size_t steps = 32) {
  SynthConfig c;
  c.nlat = 48;
  c.nlon = 48;
  c.nsteps = steps;
  return c;
}

}  // namespace

TEST_CASE("gaussian_random_field basics") {
  auto a = gaussian_random_field(16, 24, 3.0, 6.0, 42);
  auto b = gaussian_random_field(16, 24, 3.0, 6.0, 42);
  auto c = gaussian_random_field(16, 24, 3.0, 6.0, 43);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.size() == 16 * 24);
  double m = 0.0, v = 0.0;
  for (double x : a) m += x;
  m /= a.size();
  for (double x : a) v += (x - m) * (x - m);
  CHECK(std::abs(m) < 1e-12);
  CHECK(v / a.size() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(gaussian_random_field(7, 16, 3.0, 6.0, 1), Error);
  try {
    gaussian_random_field(16, 4, 3.0, 6.0, 1);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooSmallGrid);
  }
}

TEST_CASE("gaussian_random_field mean is small over seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto f = gaussian_random_field(64, 64, 3.0, 6.0, seed);
    double m = 0.0;
    for (double x : f) m += x;
    CHECK(std::abs(m / f.size()) < 0.1);
  }
}

TEST_CASE("gaussian_random_field radial spectrum follows the configured slope") {
  const std::size_t n = 256;
  const double alpha = 3.0, k0 = 6.0;
  auto f = gaussian_random_field(n, n, alpha, k0, 7);
  auto p = naive_power(f, n);
  // Radially averaged power in integer shells, fitted against
  // log(1 + (k/k0)^2) whose coefficient is -alpha/2.
  std::vector<double> sum(n, 0.0), cnt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double ky = i <= n / 2 ? double(i) : double(i) - n;
      const double kx = j <= n / 2 ? double(j) : double(j) - n;
      const auto k = static_cast<std::size_t>(std::lround(std::hypot(ky, kx)));
      if (k >= 1 && k <= 100) {
        sum[k] += p[i * n + j];
        cnt[k] += 1.0;
      }
    }
  double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
  for (std::size_t k = 1; k <= 100; ++k) {
    const double x = std::log1p((k / k0) * (k / k0));
    const double y = std::log(sum[k] / cnt[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    m += 1;
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  CHECK(-2.0 * slope == doctest::Approx(alpha).epsilon(0.15));
}

TEST_CASE("synth is deterministic and serial equals parallel") {
  auto c = small(16);
  auto a = synth_tp_vimd(c);
  auto b = synth_tp_vimd(c);
  auto s = serial::synth_tp_vimd(c);
  CHECK(a.tp == b.tp);
  CHECK(a.vimd == b.vimd);
  CHECK(a.tp == s.tp);
  CHECK(a.vimd == s.vimd);
  c.seed += 1;
  CHECK_FALSE(synth_tp_vimd(c).tp == a.tp);
}

TEST_CASE("shorter runs are a prefix of longer runs") {
  auto a = synth_tp_vimd(small(8));
  auto b = synth_tp_vimd(small(16));
  CHECK(b.tp.slice(0, 8) == a.tp);
  CHECK(b.vimd.slice(0, 8) == a.vimd);
}

TEST_CASE("TP follows the thresholded exponential of the latent field") {
  // With rho = 1 the latent wet field is recoverable from VIMD.
  auto c = small(4);
  c.tp_vimd_coupling = 1.0;
  c.vimd_mean = 0.3;
  c.vimd_std = 2.0;
  c.amplitude = 1.5;
  c.tail_scale = 0.9;
  c.wet_threshold = 0.7;
  auto f = synth_tp_vimd(c);
  std::size_t wet = 0, dry = 0;
  for (std::size_t t = 0; t < f.tp.size(); ++t)
    for (std::size_t i = 0; i < f.tp.cells(); ++i) {
      const double zw = (c.vimd_mean - f.vimd.step(t)[i]) / c.vimd_std;
      const double expect = zw > c.wet_threshold ? c.amplitude * std::expm1(c.tail_scale * (zw - c.wet_threshold)) : 0.0;
      if (zw > c.wet_threshold + 1e-4) {
        ++wet;
        CHECK(f.tp.step(t)[i] == doctest::Approx(expect).epsilon(1e-4).scale(1e-4));
      } else if (zw < c.wet_threshold - 1e-4) {
        ++dry;
        CHECK(f.tp.step(t)[i] == 0.0f);
      }
    }
  CHECK(wet > 0);
  CHECK(dry > 0);
}

TEST_CASE("wet fraction, coupling sign and VIMD marginal") {
  SynthConfig c;
  c.nsteps = 64;
  c.vimd_mean = 0.5;
  c.vimd_std = 2.0;
  auto f = synth_tp_vimd(c);
  std::size_t wet = 0, n = 0;
  double si = 0, sv = 0, sii = 0, svv = 0, siv = 0;
  std::vector<double> sample;
  for (std::size_t t = 0; t < f.tp.size(); ++t)
    for (std::size_t i = 0; i < f.tp.cells(); ++i) {
      const double ind = f.tp.step(t)[i] > 0.0f ? 1.0 : 0.0;
      const double v = f.vimd.step(t)[i];
      CHECK(f.tp.step(t)[i] >= 0.0f);
      wet += ind > 0;
      ++n;
      si += ind;
      sv += v;
      sii += ind * ind;
      svv += v * v;
      siv += ind * v;
      // every 7th cell of every step
      if (i % 7 == 0) sample.push_back((v - c.vimd_mean) / c.vimd_std);
    }
  const double wf = static_cast<double>(wet) / n;
  CHECK(std::abs(wf - (1.0 - phi_cdf(1.0))) <= 0.02);
  CHECK(1.0 - wf >= 0.5);
  const double cov = siv / n - (si / n) * (sv / n);
  const double corr = cov / std::sqrt((sii / n - (si / n) * (si / n)) * (svv / n - (sv / n) * (sv / n)));
  CHECK(corr < 0.0);

  std::sort(sample.begin(), sample.end());
  REQUIRE(sample.size() >= 10000);
  double ks = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const double F = phi_cdf(sample[k]);
    ks = std::max({ks, std::abs(F - double(k) / sample.size()), std::abs(F - double(k + 1) / sample.size())});
  }
  CHECK(ks < 0.02);
}

TEST_CASE("latent field has AR(1) lag-one correlation") {
  auto c = small(256);
  c.tp_vimd_coupling = 1.0;
  auto f = synth_tp_vimd(c);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < f.vimd.cells(); i += 5)
    for (std::size_t t = 1; t < f.vimd.size(); ++t) {
      num += double(f.vimd.step(t)[i]) * f.vimd.step(t - 1)[i];
      den += double(f.vimd.step(t - 1)[i]) * f.vimd.step(t - 1)[i];
    }
  CHECK(num / den == doctest::Approx(c.temporal_ar1).epsilon(0.06));
}

TEST_CASE("config validation") {
  auto bad = [](auto mutate) {
    SynthConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), Error);
  };
  bad([](SynthConfig& c) { c.tp_vimd_coupling = 1.5; });
  bad([](SynthConfig& c) { c.tp_vimd_coupling = -0.1; });
  bad([](SynthConfig& c) { c.temporal_ar1 = 1.0; });
  bad([](SynthConfig& c) { c.spectral_slope = 1.0; });
  bad([](SynthConfig& c) { c.tail_scale = 0.0; });
  bad([](SynthConfig& c) { c.amplitude = -1.0; });
  bad([](SynthConfig& c) { c.nsteps = 0; });
  SynthConfig ok;
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("derived seeds differ across streams and steps") {
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 1, 0));
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 0, 1));
  CHECK(derive_seed(1, 0, 5) == derive_seed(1, 0, 5));
}
