#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "pp/error.hpp"
#include "pp/fft.hpp"
#include "pp/spectral.hpp"
#include "pp/synth.hpp"

using namespace pp;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> random_field(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> f(n);
  for (auto& x : f) x = nd(rng);
  return f;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double energy(const std::vector<double>& f) {
  double e = 0.0;
  for (double x : f) e += x * x;
  return e;
}

// Si(pi) by composite Simpson on sin(t)/t.
double si_pi() {
  const int n = 20000;
  const double h = kPi / n;
  auto f = [](double t) { return t == 0.0 ? 1.0 : std::sin(t) / t; };
  double s = f(0.0) + f(kPi);
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(k * h);
  return s * h / 3.0;
}

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error");
  return Errc::BadConfig;
}

LowpassSpec brick(double cutoff, std::size_t pad = 0) { return {cutoff, Taper::BrickWall, 0.0, pad}; }

}  // namespace

TEST_CASE("dft2 matches a naive DFT") {
  const std::size_t r = 6, c = 10;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<Complex> in(r * c);
  for (auto& z : in) z = {nd(rng), nd(rng)};
  for (bool inv : {false, true}) {
    auto out = dft2(in, r, c, inv);
    const double sign = inv ? 1.0 : -1.0;
    for (std::size_t k = 0; k < r; ++k)
      for (std::size_t l = 0; l < c; ++l) {
        Complex s = 0.0;
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            s += in[i * c + j] * std::polar(1.0, sign * 2.0 * kPi * (double(k * i) / r + double(l * j) / c));
        s /= std::sqrt(double(r * c));
        CHECK(std::abs(out[k * c + l] - s) <= 1e-12);
      }
  }
}

TEST_CASE("fft2_real round trip, Parseval and errors") {
  auto f = random_field(64 * 64, 3);
  auto spec = fft2_real(f, 64, 64);
  auto back = ifft2_real(spec, 64, 64);
  CHECK(max_abs_diff(f, back) <= 1e-10);
  double es = 0.0;
  for (auto z : spec) es += std::norm(z);
  CHECK(es == doctest::Approx(energy(f)).epsilon(1e-12));
  CHECK(code_of([&] { fft2_real(std::vector<double>(63 * 64), 63, 64); }) == Errc::BadDimensions);
  CHECK(code_of([&] { fft2_real(std::vector<double>(10), 4, 4); }) == Errc::BadDimensions);
}

TEST_CASE("fft2_real of constant and cosine fields") {
  const std::size_t n = 32;
  auto dc = fft2_real(std::vector<double>(n * n, 2.5), n, n);
  CHECK(std::abs(dc[0] - Complex(2.5 * n, 0.0)) <= 1e-12);
  for (std::size_t k = 1; k < dc.size(); ++k) CHECK(std::abs(dc[k]) <= 1e-12);

  std::vector<double> cosine(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cosine[i * n + j] = std::cos(2.0 * kPi * 3.0 * i / n);
  auto s = fft2_real(cosine, n, n);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const bool peak = k == 3 * n || k == (n - 3) * n;
    if (peak)
      CHECK(std::abs(s[k] - Complex(n / 2.0, 0.0)) <= 1e-10);
    else
      CHECK(std::abs(s[k]) <= 1e-10);
  }
}

TEST_CASE("signed_frequency") {
  CHECK(signed_frequency(0, 8) == 0);
  CHECK(signed_frequency(3, 8) == 3);
  CHECK(signed_frequency(4, 8) == -4);
  CHECK(signed_frequency(7, 8) == -1);
  CHECK(signed_frequency(2, 5) == 2);
  CHECK(signed_frequency(3, 5) == -2);
}

TEST_CASE("taper response") {
  LowpassSpec rc{0.5, Taper::RaisedCosine, 0.2, 0};
  CHECK(taper_response(rc, 0.0) == 1.0);
  CHECK(taper_response(rc, 0.4) == 1.0);
  CHECK(taper_response(rc, 0.45) == doctest::Approx(0.5));
  CHECK(taper_response(rc, 0.5) == 0.0);
  CHECK(taper_response(brick(0.25), 0.25) == 1.0);
  CHECK(taper_response(brick(0.25), 0.2500001) == 0.0);
  CHECK(taper_response(brick(1.0), 1.4) == 1.0);
  CHECK_THROWS_AS(LowpassSpec{0.0}.validate(), Error);
  CHECK_THROWS_AS(LowpassSpec{1.5}.validate(), Error);
}

TEST_CASE("lowpass preserves constants and passband cosines") {
  for (double cutoff : {0.05, 0.3, 1.0}) {
    auto out = lowpass(std::vector<double>(30 * 40, 1.75), 30, 40, LowpassSpec{cutoff, Taper::RaisedCosine, 0.2, 6});
    for (double v : out) CHECK(v == doctest::Approx(1.75).epsilon(1e-12));
  }
  const std::size_t r = 32, c = 48;
  std::vector<double> f(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) f[i * c + j] = std::cos(2.0 * kPi * (2.0 * i / r + 3.0 * j / c) + 0.3);
  auto out = lowpass(f, r, c, LowpassSpec{0.5, Taper::RaisedCosine, 0.2, 0});
  CHECK(max_abs_diff(f, out) <= 1e-8);
  CHECK(code_of([&] { lowpass(std::vector<double>(5 * 4), 5, 4, brick(0.5)); }) == Errc::BadDimensions);
  CHECK(code_of([&] { lowpass(std::vector<double>(7), 2, 4, brick(0.5)); }) == Errc::BadDimensions);
}

TEST_CASE("lowpass is linear, idempotent and energy non-increasing") {
  const std::size_t r = 30, c = 40;
  auto f = random_field(r * c, 5), g = random_field(r * c, 6);
  const double a = 1.7, b = -0.4;
  for (auto spec : {brick(0.3, 5), LowpassSpec{0.4, Taper::RaisedCosine, 0.2, 5}}) {
    std::vector<double> mix(r * c);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * f[i] + b * g[i];
    auto lf = lowpass(f, r, c, spec), lg = lowpass(g, r, c, spec), lm = lowpass(mix, r, c, spec);
    std::vector<double> comb(r * c);
    for (std::size_t i = 0; i < comb.size(); ++i) comb[i] = a * lf[i] + b * lg[i];
    CHECK(max_abs_diff(lm, comb) <= 1e-10);
  }
  auto once = lowpass(f, r, c, brick(0.3));
  auto twice = lowpass(once, r, c, brick(0.3));
  CHECK(max_abs_diff(once, twice) <= 1e-10);
  CHECK(energy(once) <= energy(f) * (1.0 + 1e-10));
  auto soft = lowpass(f, r, c, LowpassSpec{0.4, Taper::RaisedCosine, 0.2, 0});
  CHECK(energy(soft) <= energy(f) * (1.0 + 1e-10));
}

TEST_CASE("brick-wall step overshoot matches the Fourier theory") {
  const double theory = si_pi() / kPi - 0.5;
  CHECK(theory == doctest::Approx(0.08949).epsilon(1e-3));
  const double measured = step_overshoot(4096, 0.25);
  CHECK(measured >= 0.080);
  CHECK(measured <= 0.098);
  // The sampled peak approaches the continuous one as the ripple widens.
  double previous = 1.0;
  for (double cutoff : {0.25, 0.125, 0.0625, 0.03125}) {
    const double err = std::abs(step_overshoot(4096, cutoff) - theory);
    CHECK(err < previous);
    previous = err;
  }
  CHECK(previous <= 5e-4);
  CHECK(code_of([] { step_overshoot(15, 0.25); }) == Errc::BadDimensions);
  CHECK(code_of([] { step_overshoot(8, 0.25); }) == Errc::BadDimensions);
}

TEST_CASE("make_pairs shapes and identities") {
  auto hr = testutil::make_series(FieldKind::VIMD, 16, 24, 3, [](std::size_t, std::size_t, std::size_t) { return 4.5; });
  auto p = make_pairs(hr, 4, LowpassSpec{});
  CHECK(p.factor == 4);
  CHECK(p.lr.nlat() == 4);
  CHECK(p.lr.nlon() == 6);
  CHECK(p.lr.t0() == hr.t0());
  CHECK(p.lr.size() == 3);
  CHECK(p.lr.geometry().lat[1] == hr.geometry().lat[4]);
  for (std::size_t s = 0; s < 3; ++s)
    for (float v : p.lr.step(s)) CHECK(v == doctest::Approx(4.5).epsilon(1e-6));

  auto rnd = testutil::random_series(FieldKind::TP, 16, 24, 2, 8);
  auto id = make_pairs(rnd, 1, brick(1.0, 4));
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t k = 0; k < rnd.cells(); ++k) CHECK(id.lr.step(s)[k] == doctest::Approx(rnd.step(s)[k]).scale(1.0).epsilon(1e-6));

  CHECK(code_of([&] { make_pairs(hr, 0, LowpassSpec{}); }) == Errc::BadFactor);
  CHECK(code_of([&] { make_pairs(hr, 5, LowpassSpec{}); }) == Errc::BadFactor);
}

TEST_CASE("band-limited fields survive sampling and Fourier upsampling") {
  const std::size_t n = 32, f = 4;
  struct Wave {
    double ky, kx, amp, phase;
  };
  const std::vector<Wave> waves{{0, 1, 1.0, 0.2}, {1, 2, 0.7, 1.1}, {2, -1, 0.5, -0.4}, {3, 0, 0.3, 2.0}, {0, 0, 0.25, 0}};
  auto hr = testutil::make_series(FieldKind::VIMD, n, n, 1, [&](std::size_t, std::size_t i, std::size_t j) {
    double v = 0.0;
    for (const auto& w : waves) v += w.amp * std::cos(2.0 * kPi * (w.ky * i + w.kx * j) / n + w.phase);
    return v;
  });
  auto pairs = make_pairs(hr, f, brick(1.0, 0));
  std::vector<double> lr(pairs.lr.step(0).begin(), pairs.lr.step(0).end());
  auto up = fourier_upsample(lr, n / f, n / f, f);
  std::vector<double> ref(hr.step(0).begin(), hr.step(0).end());
  double peak = 0.0;
  for (double v : ref) peak = std::max(peak, std::abs(v));
  CHECK(max_abs_diff(up, ref) <= 1e-6 * peak);
}

TEST_CASE("gibbs_metrics on a constructed case") {
  const std::size_t n = 10;
  auto g = Geometry::regular(FieldKind::TP, n, n, 60.0, 0.0, 0.25);
  GeoGrid orig{g, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) orig.values[i * n + j] = 5.0;
  auto same = gibbs_metrics(orig, orig);
  CHECK(same.negative_cell_fraction == 0.0);
  CHECK(same.max_overshoot_ratio == 0.0);
  CHECK(same.dry_region_ringing_energy == 0.0);

  GeoGrid filt = orig;
  filt.values[0] = 6.0;           // overshoot 1 on a range of 5
  filt.values[9 * n + 9] = -0.5;  // far dry cell, negative
  filt.values[3 * n + 3] = -2e-7; // within the dilated wet region, below tolerance
  auto r = gibbs_metrics(orig, filt);
  CHECK(r.negative_cell_fraction == doctest::Approx(1.0 / 100.0));
  CHECK(r.max_overshoot_ratio == doctest::Approx(0.2));
  // 16 cells lie within two cells of the wet block.
  CHECK(r.dry_region_ringing_energy == doctest::Approx(0.25 / 84.0));

  GeoGrid vo{g.with_kind(FieldKind::VIMD), orig.values}, vf{g.with_kind(FieldKind::VIMD), filt.values};
  CHECK(gibbs_metrics(vo, vf).negative_cell_fraction == 0.0);

  auto other = Geometry::regular(FieldKind::TP, n, n + 2, 60.0, 0.0, 0.25);
  CHECK(code_of([&] { gibbs_metrics(orig, GeoGrid{other, std::vector<double>(n * (n + 2))}); }) == Errc::GeometryMismatch);
}

TEST_CASE("brick-wall filtering of synthetic TP rings into dry regions") {
  SynthConfig sc;
  sc.nsteps = 4;
  auto f = synth_tp_vimd(sc);
  auto filtered = lowpass_series(f.tp, brick(0.25, 8));
  auto r = gibbs_metrics(f.tp, filtered);
  CHECK(r.negative_cell_fraction >= 0.01);
  CHECK(r.max_overshoot_ratio >= 0.0);
  CHECK(r.dry_region_ringing_energy > 0.0);
  CHECK(filtered.has_negative_tp());
}

TEST_CASE("lowpass_series: serial equals parallel, masks stay masked") {
  auto g = Geometry::regular(FieldKind::VIMD, 20, 24, 60.0, 0.0, 0.25);
  g.mask[5] = 0;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<std::vector<float>> steps(5, std::vector<float>(g.cells()));
  for (auto& s : steps)
    for (auto& x : s) x = static_cast<float>(nd(rng));
  GridSeries in(g, 0, steps);
  LowpassSpec spec{0.3, Taper::RaisedCosine, 0.2, 4};
  auto a = lowpass_series(in, spec);
  auto b = serial::lowpass_series(in, spec);
  CHECK(a == b);
  CHECK(a.geometry().mask == g.mask);
  CHECK(a.size() == 5);
}
