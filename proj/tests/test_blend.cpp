#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "helpers.hpp"
#include "pp/blend.hpp"
#include "pp/error.hpp"
#include "pp/normal.hpp"
#include "pp/synth.hpp"

using namespace pp;

namespace {

// Phi in extended precision.
long double cdf_ld(long double x) { return 0.5L * std::erfc(-x / std::sqrt(2.0L)); }

// Phi^-1(p) by bisection to well below 1e-12.
double bisect_quantile(double p) {
  long double lo = -10.0L, hi = 10.0L;
  for (int k = 0; k < 200 && hi - lo > 1e-15L; ++k) {
    const long double mid = 0.5L * (lo + hi);
    (cdf_ld(mid) < p ? lo : hi) = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
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

std::vector<double> normal_targets(const QuantileSpec& spec) {
  std::vector<double> t;
  for (double p : spec.probs()) t.push_back(normal_quantile(p));
  return t;
}

// Bins at p_k = (k + 1) / (m + 1) and a batch of m + 2 sorted points whose
// interpolation positions p (n - 1) = k + 1 are integers, so the batch
// reproduces the normal quantiles exactly.
QuantileSpec integral_spec(std::size_t m = 3999) {
  return QuantileSpec{m, 1.0 / (m + 1.0), m / (m + 1.0)};
}

std::vector<double> fixed_point_batch(const QuantileSpec& spec) {
  std::vector<double> b{-10.0};
  for (double t : normal_targets(spec)) b.push_back(t);
  b.push_back(10.0);
  return b;
}

PPModel untrained_model() {
  return PPModel{init_mlp(std::vector<std::size_t>{2, 8, 1}, 1), init_mlp(std::vector<std::size_t>{1, 8, 1}, 2),
                 Normalization{0.8, 0.1, 1.7}};
}

}  // namespace

TEST_CASE("normal_quantile examples") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  CHECK(std::abs(normal_quantile(0.975) - 1.959963985) <= 1e-9);
  CHECK(std::abs(normal_quantile(1e-6) - -4.753424309) <= 1e-9);
  CHECK(code_of([] { normal_quantile(0.0); }) == Errc::BadProb);
  CHECK(code_of([] { normal_quantile(1.0); }) == Errc::BadProb);
  CHECK(code_of([] { normal_quantile(std::nan("")); }) == Errc::BadProb);
}

TEST_CASE("normal_quantile matches a bisection oracle on [1e-6, 1 - 1e-6]") {
  double worst = 0.0;
  std::vector<double> ps;
  for (int i = 0; i <= 20000; ++i) ps.push_back(1e-6 + (1.0 - 2e-6) * i / 20000.0);
  for (int i = 0; i <= 400; ++i) {
    const double p = std::pow(10.0, -6.0 + 5.0 * i / 400.0);
    ps.push_back(p);
    ps.push_back(1.0 - p);
  }
  for (double p : ps) worst = std::max(worst, std::abs(normal_quantile(p) - bisect_quantile(p)));
  CHECK(worst <= 1e-9);
}

TEST_CASE("normal_cdf and KS statistic") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.959963985) == doctest::Approx(0.975).epsilon(1e-9));
  std::vector<double> s{1.0, -1.0, 0.0};
  // Sorted {-1, 0, 1}: the largest gap is Phi(1) - 2/3.
  const double expect = static_cast<double>(cdf_ld(1.0L)) - 2.0 / 3.0;
  CHECK(ks_statistic_normal(s) == doctest::Approx(expect).epsilon(1e-12));
  std::vector<double> exact;
  for (int k = 0; k < 1000; ++k) exact.push_back(normal_quantile((k + 0.5) / 1000.0));
  CHECK(ks_statistic_normal(exact) == doctest::Approx(0.0005).epsilon(1e-6));
  CHECK(code_of([] { ks_statistic_normal(std::vector<double>{}); }) == Errc::EmptySample);
}

TEST_CASE("empirical_quantiles examples and errors") {
  std::vector<double> a{5, 3, 1, 4, 2};
  CHECK(empirical_quantiles(a, std::vector<double>{0.5})[0] == 3.0);
  CHECK(empirical_quantiles(std::vector<double>{0, 10}, std::vector<double>{0.25})[0] == 2.5);
  CHECK(empirical_quantiles(a, std::vector<double>{0.0, 1.0}) == std::vector<double>{1.0, 5.0});
  CHECK(code_of([] { empirical_quantiles(std::vector<double>{1.0}, std::vector<double>{0.5}); }) == Errc::EmptySample);
  CHECK(code_of([&] { empirical_quantiles(a, std::vector<double>{1.5}); }) == Errc::BadProb);

  // Exact normal quantiles at the probs that land on sample positions.
  const std::size_t n = 1001;
  std::vector<double> sample(n), probs;
  for (std::size_t k = 0; k < n; ++k) sample[k] = normal_quantile((k + 1.0) / (n + 1.0));
  for (std::size_t k = 0; k < n; k += 50) probs.push_back(static_cast<double>(k) / (n - 1));
  auto q = empirical_quantiles(sample, probs);
  for (std::size_t i = 0; i < probs.size(); ++i) CHECK(std::abs(q[i] - sample[i * 50]) <= 1e-12);
}

TEST_CASE("empirical_quantiles is monotone and permutation invariant") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  std::vector<double> s(777);
  for (auto& x : s) x = nd(rng);
  auto probs = QuantileSpec{}.probs();
  auto q = empirical_quantiles(s, probs);
  CHECK(std::is_sorted(q.begin(), q.end()));
  std::shuffle(s.begin(), s.end(), rng);
  CHECK(empirical_quantiles(s, probs) == q);
}

TEST_CASE("QuantileSpec") {
  QuantileSpec spec;
  auto p = spec.probs();
  CHECK(p.size() == 4000);
  CHECK(p.front() == 1e-6);
  CHECK(p.back() == 1.0 - 1e-6);
  for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] > p[i - 1]);
  QuantileSpec bad;
  bad.p_min = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("quantile loss fixed point and shift") {
  const auto spec = integral_spec();
  QuantileLoss loss(spec);
  auto t = fixed_point_batch(spec);
  auto r = loss(t);
  CHECK(r.loss <= 1e-20);
  for (double g : r.grad) CHECK(std::abs(g) <= 1e-12);

  std::vector<double> shifted = t;
  for (auto& x : shifted) x += 1.0;
  CHECK(loss(shifted).loss == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(loss.loss_only(shifted) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(code_of([&] { loss(std::vector<double>(500, 0.0)); }) == Errc::BatchTooSmall);
}

TEST_CASE("quantile loss gradient matches finite differences off ties") {
  QuantileLoss loss;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> batch(8192);
  for (auto& x : batch) x = u(rng);
  auto r = loss(batch);

  // Gap to the nearest other sample, so that the probe keeps the sort order.
  std::vector<double> sorted = batch;
  std::sort(sorted.begin(), sorted.end());
  auto gap = [&](double x) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), x);
    double g = 1e9;
    if (it != sorted.begin()) g = std::min(g, x - *(it - 1));
    if (it + 1 != sorted.end()) g = std::min(g, *(it + 1) - x);
    return g;
  };

  // Within a fixed sort order the loss is quadratic in each coordinate.
  const double h = 1e-5;
  std::uniform_int_distribution<std::size_t> pick(0, batch.size() - 1);
  int probed = 0, nonzero = 0;
  double worst = 0.0;
  while (probed < 50) {
    const std::size_t i = pick(rng);
    if (gap(batch[i]) < 10 * h) continue;
    std::vector<double> up = batch, dn = batch;
    up[i] += h;
    dn[i] -= h;
    const double fd = (loss.loss_only(up) - loss.loss_only(dn)) / (2 * h);
    if (r.grad[i] != 0.0) {
      worst = std::max(worst, std::abs(fd - r.grad[i]) / std::abs(r.grad[i]));
      ++nonzero;
    } else {
      CHECK(std::abs(fd) <= 1e-9);
    }
    ++probed;
  }
  CHECK(nonzero >= 25);
  CHECK(worst <= 1e-5);

  // Translation response: d/dc loss(batch + c) equals the gradient sum.
  const double c = 1e-6;
  std::vector<double> plus = batch, minus = batch;
  for (auto& x : plus) x += c;
  for (auto& x : minus) x -= c;
  const double dc = (loss.loss_only(plus) - loss.loss_only(minus)) / (2 * c);
  const double gsum = std::accumulate(r.grad.begin(), r.grad.end(), 0.0);
  CHECK(std::abs(dc - gsum) <= 1e-5 * std::abs(gsum));
}

TEST_CASE("reconstruction loss") {
  std::vector<double> a{1, 2, 3}, b{3, 4, 5};
  CHECK(reconstruction_loss(a, a).loss == 0.0);
  auto r = reconstruction_loss(b, a);
  CHECK(r.loss == 4.0);
  for (double g : r.grad) CHECK(g == doctest::Approx(4.0 / 3.0));
  CHECK(code_of([&] { reconstruction_loss(a, std::vector<double>{1, 2}); }) == Errc::ShapeMismatch);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  std::vector<double> p(64), t(64);
  for (auto& x : p) x = nd(rng);
  for (auto& x : t) x = nd(rng);
  auto rr = reconstruction_loss(p, t);
  // The loss is quadratic, so a wide step only reduces rounding.
  const double h = 1e-3;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto up = p, dn = p;
    up[i] += h;
    dn[i] -= h;
    const double fd = (reconstruction_loss(up, t).loss - reconstruction_loss(dn, t).loss) / (2 * h);
    CHECK(std::abs(fd - rr.grad[i]) <= 1e-8 * std::abs(rr.grad[i]) + 1e-12);
  }
}

TEST_CASE("total loss weighting") {
  TrainConfig cfg;
  CHECK(cfg.w_quant == 20.0);
  CHECK(cfg.w_rec == 1.0);
  CHECK(combine_losses(0.1, 0.5, cfg) == doctest::Approx(2.5));
  CHECK(combine_losses(0.0, 0.0, cfg) == 0.0);
  cfg.w_quant = 0.0;
  CHECK(combine_losses(0.7, 0.3, cfg) == 0.3);

  TrainConfig d;
  d.quantiles = integral_spec();
  QuantileLoss ql(d.quantiles);
  auto pp = fixed_point_batch(d.quantiles);
  std::vector<double> pred(pp.size(), 0.25), truth(pp.size(), 0.25);
  auto zero = total_loss(pp, pred, truth, d, ql);
  CHECK(zero.total <= 1e-18);
  std::vector<double> shifted = pp;
  for (auto& x : shifted) x += 0.1;
  truth.assign(pp.size(), 0.0);
  auto tl = total_loss(shifted, pred, truth, d, ql);
  CHECK(tl.quant == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(tl.rec == doctest::Approx(0.0625).epsilon(1e-12));
  CHECK(tl.total == doctest::Approx(20 * 0.01 + 0.0625).epsilon(1e-9));
  CHECK(tl.grad_pp.size() == pp.size());
  CHECK(tl.grad_pred[0] == doctest::Approx(2 * 0.25 / pp.size()));
}

TEST_CASE("TrainConfig quant weight ramp and validation") {
  TrainConfig c;
  CHECK(c.quant_weight(0.0) == 0.0);
  CHECK(c.quant_weight(double(c.quant_warmup_start)) == 0.0);
  CHECK(c.quant_weight(double(c.quant_warmup_end)) == c.w_quant);
  CHECK(c.quant_weight(1000.0) == c.w_quant);
  const double mid = 0.5 * (c.quant_warmup_start + c.quant_warmup_end);
  CHECK(c.quant_weight(mid) == doctest::Approx(0.5 * c.w_quant));
  c.quant_warmup_start = c.quant_warmup_end = 0;
  CHECK(c.quant_weight(0.0) == c.w_quant);

  CHECK_NOTHROW(TrainConfig{}.validate());
  auto bad = [](auto mutate) {
    TrainConfig t;
    mutate(t);
    CHECK_THROWS_AS(t.validate(), Error);
  };
  bad([](TrainConfig& t) { t.batch_size = 4095; });
  bad([](TrainConfig& t) { t.w_quant = -1; });
  bad([](TrainConfig& t) { t.holdout_fraction = 1.0; });
  bad([](TrainConfig& t) { t.encoder_widths = {3, 8, 1}; });
  bad([](TrainConfig& t) { t.decoder_widths = {1, 8, 2}; });
  bad([](TrainConfig& t) { t.tp_input_scale = 0.0; });
  bad([](TrainConfig& t) { t.quant_warmup_start = 20; });
}

TEST_CASE("normalization round trip and decode clamp") {
  Normalization n{0.8, 0.1, 1.7};
  for (double tp : {0.0, 0.01, 1.0, 37.5}) CHECK(denormalize_tp(n, normalize_tp(n, tp)) == doctest::Approx(tp));
  CHECK(normalize_vimd(n, 1.8) == doctest::Approx(1.0));
  CHECK(denormalize_tp(n, -3.0) == 0.0);

  auto model = untrained_model();
  std::vector<double> probe;
  for (int k = -1000; k <= 1000; ++k) probe.push_back(k * 0.01);
  auto geo = Geometry::regular(FieldKind::PP, 1, probe.size(), 60.0, 0.0, 0.25);
  std::vector<float> row(probe.begin(), probe.end());
  GridSeries pp(geo, 0, {row});
  auto tp = decode(model, pp);
  for (float v : tp.step(0)) CHECK(v >= 0.0f);
  CHECK(tp.kind() == FieldKind::TP);

  // Inverted decoder: large PP maps to strongly negative TP' before the clamp.
  auto neg = model;
  for (auto& w : neg.decoder.layers.back().weights.flat()) w = -std::abs(w) * 50.0;
  auto tp2 = decode(neg, pp);
  for (float v : tp2.step(0)) CHECK(v >= 0.0f);
}

TEST_CASE("encode and decode keep shape, timestamps and masks") {
  auto model = untrained_model();
  auto g = Geometry::regular(FieldKind::TP, 6, 7, 60.0, 0.0, 0.25);
  g.mask[3] = 0;
  g.mask[20] = 0;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  std::vector<std::vector<float>> tv(5, std::vector<float>(42)), vv(5, std::vector<float>(42));
  for (auto& s : tv)
    for (auto& x : s) x = static_cast<float>(std::max(0.0, nd(rng)));
  for (auto& s : vv)
    for (auto& x : s) x = static_cast<float>(nd(rng));
  GridSeries tp(g, 1262304000, tv);
  GridSeries vimd(g.with_kind(FieldKind::VIMD), 1262304000, vv);
  auto pp = encode(model, tp, vimd);
  CHECK(pp.kind() == FieldKind::PP);
  CHECK(pp.size() == 5);
  CHECK(pp.t0() == tp.t0());
  CHECK(pp.geometry().mask == g.mask);
  auto back = decode(model, pp);
  CHECK(back.geometry().same_layout(g));
  CHECK(back.t0() == tp.t0());

  // Encoder output at a cell equals the point-wise map.
  const auto& n = model.norm;
  auto one = encode_points(model, std::vector<double>{normalize_tp(n, tv[2][11])},
                           std::vector<double>{normalize_vimd(n, vv[2][11])});
  CHECK(pp.step(2)[11] == static_cast<float>(one[0]));

  CHECK(code_of([&] { decode(model, tp); }) == Errc::KindMismatch);
  CHECK(code_of([&] { encode(model, vimd, tp); }) == Errc::KindMismatch);
  GridSeries late(g.with_kind(FieldKind::VIMD), 1262304000 + kStepSeconds, vv);
  CHECK(code_of([&] { encode(model, tp, late); }) == Errc::GeometryMismatch);
}

TEST_CASE("train_pp input checks") {
  SynthConfig s;
  s.nlat = 16;
  s.nlon = 16;
  s.nsteps = 8;
  auto f = synth_tp_vimd(s);
  CHECK(code_of([&] { train_pp(f.tp, f.vimd, TrainConfig{}); }) == Errc::InsufficientData);
  CHECK(code_of([&] { train_pp(f.vimd, f.tp, TrainConfig{}); }) == Errc::KindMismatch);
}

TEST_CASE("short training run is deterministic and populates history") {
  SynthConfig s;
  s.nlat = 48;
  s.nlon = 48;
  s.nsteps = 48;
  auto f = synth_tp_vimd(s);
  TrainConfig c;
  c.epochs = 3;
  c.quant_warmup_start = 0;
  c.quant_warmup_end = 1;
  std::vector<EpochRecord> seen;
  auto a = train_pp(f.tp, f.vimd, c, [&](const EpochRecord& r) { seen.push_back(r); });
  auto b = train_pp(f.tp, f.vimd, c);
  CHECK(a.history == b.history);
  CHECK(serialize_model(a.model) == serialize_model(b.model));
  REQUIRE(a.history.epochs.size() == 3);
  CHECK(seen == a.history.epochs);
  CHECK(a.history.best_epoch >= 1);
  CHECK(a.history.best_epoch <= 3);
  for (const auto& r : a.history.epochs) {
    CHECK(std::isfinite(r.l_total));
    CHECK(r.ks >= 0.0);
    CHECK(r.ks <= 1.0);
    CHECK(r.mae >= 0.0);
    CHECK(r.l_total == doctest::Approx(combine_losses(r.l_quant, r.l_rec, c)));
  }
  c.seed += 1;
  auto d = train_pp(f.tp, f.vimd, c);
  CHECK_FALSE(d.history == a.history);

  auto dir = testutil::temp_dir("blend_hist");
  write_history_csv(a.history, dir / "h.csv");
  std::ifstream in(dir / "h.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,l_quant,l_rec,l_total,mae,ks");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) rows += !line.empty();
  CHECK(rows == 3);
}
