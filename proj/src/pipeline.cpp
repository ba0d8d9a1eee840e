#include "pp/pipeline.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "pp/error.hpp"

namespace pp {
namespace {

using nlohmann::json;

void require(bool ok, Errc code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

template <class... Args>
void log(fmt::format_string<Args...> f, Args&&... args) {
  fmt::print(stderr, "[pp] {}\n", fmt::format(f, std::forward<Args>(args)...));
}

std::string taper_name(Taper t) { return t == Taper::BrickWall ? "brick_wall" : "raised_cosine"; }

Taper parse_taper(const std::string& s) {
  if (s == "brick_wall") return Taper::BrickWall;
  if (s == "raised_cosine") return Taper::RaisedCosine;
  throw Error(Errc::BadConfig, "lowpass.taper must be brick_wall or raised_cosine, got " + s);
}

std::string init_name(WeightInit w) { return w == WeightInit::FanIn ? "fan_in" : "glorot"; }

WeightInit parse_init(const std::string& s) {
  if (s == "fan_in") return WeightInit::FanIn;
  if (s == "glorot") return WeightInit::Glorot;
  throw Error(Errc::BadConfig, "train.weight_init must be fan_in or glorot, got " + s);
}

json to_json(const PipelineConfig& c) {
  const auto& s = c.synth;
  const auto& t = c.train;
  json probes = json::array();
  for (const auto& p : c.eval.probe_cells) probes.push_back({p[0], p[1]});
  return json{
      {"seed", c.seed},
      {"paths", {{"data_dir", c.data_dir.generic_string()}, {"out_dir", c.out_dir.generic_string()}}},
      {"crop",
       {{"enabled", c.crop.enabled},
        {"lat_lo", c.crop.lat_lo},
        {"lat_hi", c.crop.lat_hi},
        {"lon_lo", c.crop.lon_lo},
        {"lon_hi", c.crop.lon_hi}}},
      {"synth",
       {{"nlat", s.nlat},
        {"nlon", s.nlon},
        {"nsteps", s.nsteps},
        {"spectral_slope", s.spectral_slope},
        {"correlation_length", s.correlation_length},
        {"wet_threshold", s.wet_threshold},
        {"tail_scale", s.tail_scale},
        {"amplitude", s.amplitude},
        {"vimd_mean", s.vimd_mean},
        {"vimd_std", s.vimd_std},
        {"tp_vimd_coupling", s.tp_vimd_coupling},
        {"temporal_ar1", s.temporal_ar1},
        {"t0", s.t0}}},
      {"train",
       {{"w_quant", t.w_quant},
        {"w_rec", t.w_rec},
        {"n_bins", t.quantiles.n_bins},
        {"p_min", t.quantiles.p_min},
        {"p_max", t.quantiles.p_max},
        {"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"lr", t.lr},
        {"lr_final", t.lr_final},
        {"holdout_fraction", t.holdout_fraction},
        {"max_points", t.max_points},
        {"encoder_widths", t.encoder_widths},
        {"decoder_widths", t.decoder_widths},
        {"quant_warmup_start", t.quant_warmup_start},
        {"quant_warmup_end", t.quant_warmup_end},
        {"tp_input_scale", t.tp_input_scale},
        {"weight_init", init_name(t.weight_init)}}},
      {"lowpass",
       {{"taper", taper_name(c.lowpass.taper)}, {"taper_width", c.lowpass.taper_width}, {"pad", c.lowpass.pad}}},
      {"factor", c.factor},
      {"downscale", {{"radius", c.ds_radius}, {"lambda", c.ds_lambda}, {"train_fraction", c.train_fraction}}},
      {"eval",
       {{"probe_cells", probes},
        {"extreme_threshold", c.eval.extreme_threshold},
        {"extreme_quantile", c.eval.extreme_quantile},
        {"segment_length", c.eval.segment_length},
        {"qq_points", c.eval.qq_points},
        {"qq_max_prob", c.eval.qq_max_prob},
        {"gibbs_steps", c.eval.gibbs_steps},
        {"step_length", c.eval.step_length}}},
  };
}

PipelineConfig from_json(const json& j) {
  PipelineConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.data_dir = j.at("paths").at("data_dir").get<std::string>();
  c.out_dir = j.at("paths").at("out_dir").get<std::string>();
  const auto& cr = j.at("crop");
  c.crop = {cr.at("enabled").get<bool>(), cr.at("lat_lo").get<double>(), cr.at("lat_hi").get<double>(),
            cr.at("lon_lo").get<double>(), cr.at("lon_hi").get<double>()};
  const auto& s = j.at("synth");
  auto& sc = c.synth;
  sc.nlat = s.at("nlat").get<std::size_t>();
  sc.nlon = s.at("nlon").get<std::size_t>();
  sc.nsteps = s.at("nsteps").get<std::size_t>();
  sc.spectral_slope = s.at("spectral_slope").get<double>();
  sc.correlation_length = s.at("correlation_length").get<double>();
  sc.wet_threshold = s.at("wet_threshold").get<double>();
  sc.tail_scale = s.at("tail_scale").get<double>();
  sc.amplitude = s.at("amplitude").get<double>();
  sc.vimd_mean = s.at("vimd_mean").get<double>();
  sc.vimd_std = s.at("vimd_std").get<double>();
  sc.tp_vimd_coupling = s.at("tp_vimd_coupling").get<double>();
  sc.temporal_ar1 = s.at("temporal_ar1").get<double>();
  sc.t0 = s.at("t0").get<std::int64_t>();
  const auto& t = j.at("train");
  auto& tc = c.train;
  tc.w_quant = t.at("w_quant").get<double>();
  tc.w_rec = t.at("w_rec").get<double>();
  tc.quantiles.n_bins = t.at("n_bins").get<std::size_t>();
  tc.quantiles.p_min = t.at("p_min").get<double>();
  tc.quantiles.p_max = t.at("p_max").get<double>();
  tc.batch_size = t.at("batch_size").get<std::size_t>();
  tc.epochs = t.at("epochs").get<std::size_t>();
  tc.lr = t.at("lr").get<double>();
  tc.lr_final = t.at("lr_final").get<double>();
  tc.holdout_fraction = t.at("holdout_fraction").get<double>();
  tc.max_points = t.at("max_points").get<std::size_t>();
  tc.encoder_widths = t.at("encoder_widths").get<std::vector<std::size_t>>();
  tc.decoder_widths = t.at("decoder_widths").get<std::vector<std::size_t>>();
  tc.quant_warmup_start = t.at("quant_warmup_start").get<std::size_t>();
  tc.quant_warmup_end = t.at("quant_warmup_end").get<std::size_t>();
  tc.tp_input_scale = t.at("tp_input_scale").get<double>();
  tc.weight_init = parse_init(t.at("weight_init").get<std::string>());
  const auto& l = j.at("lowpass");
  c.lowpass.taper = parse_taper(l.at("taper").get<std::string>());
  c.lowpass.taper_width = l.at("taper_width").get<double>();
  c.lowpass.pad = l.at("pad").get<std::size_t>();
  c.factor = j.at("factor").get<std::size_t>();
  const auto& d = j.at("downscale");
  c.ds_radius = d.at("radius").get<std::size_t>();
  c.ds_lambda = d.at("lambda").get<double>();
  c.train_fraction = d.at("train_fraction").get<double>();
  const auto& e = j.at("eval");
  c.eval.probe_cells.clear();
  for (const auto& p : e.at("probe_cells")) {
    require(p.is_array() && p.size() == 2, Errc::BadConfig, "eval.probe_cells entries must be [row, col]");
    c.eval.probe_cells.push_back({p[0].get<std::size_t>(), p[1].get<std::size_t>()});
  }
  c.eval.extreme_threshold = e.at("extreme_threshold").get<double>();
  c.eval.extreme_quantile = e.at("extreme_quantile").get<double>();
  c.eval.segment_length = e.at("segment_length").get<std::size_t>();
  c.eval.qq_points = e.at("qq_points").get<std::size_t>();
  c.eval.qq_max_prob = e.at("qq_max_prob").get<double>();
  c.eval.gibbs_steps = e.at("gibbs_steps").get<std::size_t>();
  c.eval.step_length = e.at("step_length").get<std::size_t>();
  return c;
}

// Copies `patch` into `base`, rejecting keys that `base` does not have.
void merge_known(json& base, const json& patch, const std::string& where) {
  require(patch.is_object(), Errc::BadConfig, "expected an object at " + (where.empty() ? "top level" : where));
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    require(base.contains(key), Errc::BadConfig, "unknown config key " + path);
    if (base[key].is_object())
      merge_known(base[key], value, path);
    else
      base[key] = value;
  }
}

void apply_override(json& base, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, Errc::BadConfig, "override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &base;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(node->is_object() && node->contains(part), Errc::BadConfig, "unknown config key " + key);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  require(!node->is_object(), Errc::BadConfig, "cannot override a whole section: " + key);
  *node = std::move(value);
}

PipelineConfig build_config(json patch, std::span<const std::string> overrides) {
  json j = to_json(PipelineConfig{});
  if (!patch.is_null()) merge_known(j, patch, "");
  for (const auto& o : overrides) apply_override(j, o);
  PipelineConfig c;
  try {
    c = from_json(j);
  } catch (const json::exception& e) {
    throw Error(Errc::BadConfig, std::string("config value has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_absolute() ? p : base / p;
}

void ensure_parent(const std::filesystem::path& p) {
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  require(!ec, Errc::IoFailure, "cannot create directory " + p.parent_path().string());
}

GridSeries read_series(const std::filesystem::path& path) {
  require_input(path, "PPG1");
  return read_grid_series(path);
}

PPModel read_model(const std::filesystem::path& path) {
  require_input(path, "PPM1");
  return load_model(path);
}

double sum_abs_diff(std::uint64_t a, std::uint64_t b) {
  return std::abs(static_cast<double>(a) - static_cast<double>(b));
}

std::vector<double> qq_probs(std::size_t n) {
  std::vector<double> p(n);
  for (std::size_t k = 0; k < n; ++k) p[k] = static_cast<double>(k + 1) / static_cast<double>(n + 1);
  return p;
}

double mse(const GridSeries& a, const GridSeries& b) {
  const auto& g = a.geometry();
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    auto x = a.step(t);
    auto y = b.step(t);
    for (std::size_t c = 0; c < g.cells(); ++c) {
      if (!g.valid(c)) continue;
      const double d = static_cast<double>(x[c]) - static_cast<double>(y[c]);
      s += d * d;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

struct RoundTrip {
  double mae_norm = 0.0;
  double mae_mm = 0.0;
};

// Point-wise encode/decode of every valid held-out cell, in chunks of steps.
RoundTrip round_trip(const PPModel& model, const GridSeries& tp, const GridSeries& vimd) {
  const auto& g = tp.geometry();
  const auto& n = model.norm;
  double err_norm = 0.0, err_mm = 0.0;
  std::size_t count = 0;
  constexpr std::size_t kChunk = 32;
  std::vector<double> tn, vn;
  for (std::size_t t0 = 0; t0 < tp.size(); t0 += kChunk) {
    tn.clear();
    vn.clear();
    const std::size_t t1 = std::min(tp.size(), t0 + kChunk);
    for (std::size_t t = t0; t < t1; ++t) {
      auto x = tp.step(t);
      auto v = vimd.step(t);
      for (std::size_t c = 0; c < g.cells(); ++c) {
        if (!g.valid(c)) continue;
        tn.push_back(normalize_tp(n, x[c]));
        vn.push_back(normalize_vimd(n, v[c]));
      }
    }
    auto pred = decode_points(model, encode_points(model, tn, vn));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      err_norm += std::abs(std::max(pred[i], 0.0) - tn[i]);
      err_mm += std::abs(denormalize_tp(n, pred[i]) - denormalize_tp(n, tn[i]));
    }
    count += pred.size();
  }
  require(count > 0, Errc::EmptySample, "no valid cells in the held-out steps");
  return {err_norm / static_cast<double>(count), err_mm / static_cast<double>(count)};
}

}  // namespace

void EvalConfig::validate() const {
  require(!probe_cells.empty(), Errc::BadConfig, "eval.probe_cells must not be empty");
  require(extreme_threshold >= 0.0, Errc::BadConfig, "eval.extreme_threshold must be non-negative");
  require(extreme_quantile > 0.0 && extreme_quantile < 1.0, Errc::BadConfig, "eval.extreme_quantile must lie in (0,1)");
  require(segment_length >= 8, Errc::BadConfig, "eval.segment_length must be at least 8");
  require(qq_points >= 1, Errc::BadConfig, "eval.qq_points must be positive");
  require(qq_max_prob > 0.0 && qq_max_prob <= 1.0, Errc::BadConfig, "eval.qq_max_prob must lie in (0,1]");
  require(gibbs_steps >= 1, Errc::BadConfig, "eval.gibbs_steps must be positive");
  require(step_length >= 16 && step_length % 2 == 0, Errc::BadConfig, "eval.step_length must be even and >= 16");
}

SynthConfig PipelineConfig::synth_config() const {
  SynthConfig s = synth;
  s.seed = seed;
  return s;
}

TrainConfig PipelineConfig::train_config() const {
  TrainConfig t = train;
  t.seed = derive_seed(seed, 1, 0);
  return t;
}

RouteConfig PipelineConfig::route_config() const {
  RouteConfig r;
  r.factor = factor;
  r.lowpass = lowpass;
  r.radius = ds_radius;
  r.lambda = ds_lambda;
  r.train_fraction = train_fraction;
  return r;
}

void PipelineConfig::validate() const {
  require(!out_dir.empty(), Errc::BadConfig, "paths.out_dir must not be empty");
  require(!data_dir.empty(), Errc::BadConfig, "paths.data_dir must not be empty");
  synth_config().validate();
  train_config().validate();
  route_config().validate();
  require(factor >= 2, Errc::BadConfig, "factor must be at least 2");
  require(synth.nlat % factor == 0 && synth.nlon % factor == 0, Errc::BadConfig,
          "factor must divide the grid dimensions");
  require(ds_lambda >= 0.0, Errc::BadConfig, "downscale.lambda must be non-negative");
  require(train_fraction > 0.0 && train_fraction < 1.0, Errc::BadConfig, "downscale.train_fraction must lie in (0,1)");
  eval.validate();
  for (const auto& p : eval.probe_cells)
    require(p[0] < synth.nlat && p[1] < synth.nlon, Errc::BadConfig,
            fmt::format("probe cell ({}, {}) lies outside the grid", p[0], p[1]));
}

std::string config_json(const PipelineConfig& config) { return to_json(config).dump(2) + "\n"; }

PipelineConfig parse_config(const std::string& json_text, std::span<const std::string> overrides) {
  json patch = json::parse(json_text, nullptr, false);
  require(!patch.is_discarded(), Errc::BadConfig, "config is not valid JSON");
  return build_config(std::move(patch), overrides);
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& path, std::span<const std::string> overrides) {
  if (!path) return build_config(json(), overrides);
  require(std::filesystem::exists(*path), Errc::MissingInput, "config file not found: " + path->string());
  std::ifstream in(*path);
  require(static_cast<bool>(in), Errc::IoFailure, "cannot open " + path->string());
  json patch = json::parse(in, nullptr, false);
  require(!patch.is_discarded(), Errc::BadConfig, path->string() + " is not valid JSON");
  return build_config(std::move(patch), overrides);
}

Layout::Layout(const PipelineConfig& c) {
  const auto out = c.out_dir;
  const auto data = resolve(out, c.data_dir);
  tp = data / "tp.ppg";
  vimd = data / "vimd.ppg";
  config = out / "config.json";
  model = out / "model.ppm";
  history = out / "history.csv";
  pp = out / "pp.ppg";
  decoded = out / "decoded.ppg";
  pairs_hr = out / "pairs_hr.ppg";
  pairs_lr = out / "pairs_lr.ppg";
  ds_model = out / "ds.ppd";
  downscaled = out / "downscaled.ppg";
  eval_dir = out / "eval";
  report_dir = out / "report";
}

void require_input(const std::filesystem::path& path, std::string_view magic) {
  require(std::filesystem::is_regular_file(path), Errc::MissingInput, "missing input " + path.string());
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::IoFailure, "cannot open " + path.string());
  std::string head(magic.size(), '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  require(in.gcount() == static_cast<std::streamsize>(head.size()) && head == magic, Errc::MalformedHeader,
          fmt::format("{} is not a {} file", path.string(), magic));
}

int exit_code(const Error& error) noexcept {
  switch (error.code()) {
    case Errc::MissingInput:
    case Errc::InsufficientData: return 2;
    case Errc::NonFiniteLoss:
    case Errc::NonFiniteValue:
    case Errc::SingularSystem: return 3;
    case Errc::IoFailure: return 1;
    default: return 4;
  }
}

double summary_value(const ReportData& data, std::string_view name) {
  for (const auto& s : data.summary)
    if (s.name == name) return s.value;
  throw Error(Errc::MalformedInput, fmt::format("summary has no entry {}", name));
}

ReportData evaluate_suite(const GridSeries& tp, const GridSeries& vimd, const PPModel& model,
                          const PipelineConfig& config) {
  config.validate();
  ReportData report;
  auto summary = [&](std::string name, double value) { report.summary.push_back({std::move(name), value}); };

  log("route comparison on {} steps", tp.size());
  const RouteOutputs routes = route_compare(tp, vimd, model, config.route_config());
  const std::size_t train = routes.train_steps;
  const std::size_t held = routes.truth.size();
  const GridSeries vimd_held = vimd.slice(train, held);
  summary("train_steps", static_cast<double>(train));
  summary("held_steps", static_cast<double>(held));
  summary("hr_mse_route_a", mse(routes.route_a, routes.truth));
  summary("hr_mse_route_b", mse(routes.route_b, routes.truth));

  // Band-limit demonstration: brick-wall truncation at 1/factor of Nyquist
  // applied to TP directly and to PP before decoding.
  log("band-limit demonstration on {} steps", std::min(config.eval.gibbs_steps, held));
  {
    const std::size_t n = std::min(config.eval.gibbs_steps, held);
    const GridSeries tp_s = routes.truth.slice(0, n);
    const GridSeries vimd_s = vimd_held.slice(0, n);
    const LowpassSpec brick{1.0 / static_cast<double>(config.factor), Taper::BrickWall, 0.0, config.lowpass.pad};
    append_gibbs(report.gibbs, "bandlimit_tp", gibbs_metrics(tp_s, lowpass_series(tp_s, brick)));
    const GridSeries pp_route = decode(model, lowpass_series(encode(model, tp_s, vimd_s), brick));
    append_gibbs(report.gibbs, "bandlimit_pp", gibbs_metrics(tp_s, pp_route));
    report.gibbs.push_back({"step_overshoot", "bandlimit_1d",
                            step_overshoot(config.eval.step_length, 1.0 / static_cast<double>(config.factor))});
  }
  append_gibbs(report.gibbs, "route_a", gibbs_metrics(routes.truth, routes.route_a));
  append_gibbs(report.gibbs, "route_b", gibbs_metrics(routes.truth, routes.route_b));

  log("temporal spectra at {} probe cells", config.eval.probe_cells.size());
  {
    std::vector<std::size_t> cells;
    for (const auto& p : config.eval.probe_cells) cells.push_back(p[0] * tp.nlon() + p[1]);
    report.psd.push_back({"truth", temporal_psd(routes.truth, cells, config.eval.segment_length)});
    report.psd.push_back({"route_a", temporal_psd(routes.route_a, cells, config.eval.segment_length)});
    report.psd.push_back({"route_b", temporal_psd(routes.route_b, cells, config.eval.segment_length)});
  }

  log("quantiles");
  {
    const auto probs = qq_probs(config.eval.qq_points);
    const double p_max = config.eval.qq_max_prob;
    auto ref = valid_values(routes.truth);
    std::sort(ref.begin(), ref.end());
    const double q99 = sorted_quantile(ref, p_max);
    summary("qq_ref_at_max_prob", q99);
    auto add = [&](const std::string& label, const GridSeries& s) {
      QqData q = qq_data(valid_values(s), ref, probs);
      summary("qq_maxdev_" + label, q.max_deviation(p_max));
      report.qq.push_back({label, std::move(q)});
    };
    add("route_a", routes.route_a);
    add("route_b", routes.route_b);
    add("roundtrip", decode(model, encode(model, routes.truth, vimd_held)));
    summary("tp_p99_mm", sorted_quantile(ref, 0.99));
  }

  log("point-wise round trip");
  {
    const RoundTrip rt = round_trip(model, routes.truth, vimd_held);
    summary("roundtrip_mae_norm", rt.mae_norm);
    summary("roundtrip_mae_mm", rt.mae_mm);
    summary("roundtrip_mae_over_p99", rt.mae_mm / summary_value(report, "tp_p99_mm"));
    summary("paper_reported_mae", 1e-6);
  }

  log("extreme days");
  {
    auto totals = daily_totals(routes.truth);
    std::sort(totals.begin(), totals.end());
    const double scaled = sorted_quantile(totals, config.eval.extreme_quantile);
    summary("extreme_threshold_scaled", scaled);
    summary("extreme_threshold_flag", config.eval.extreme_threshold);
    auto count_all = [&](double threshold, const std::string& suffix) {
      const ExtremeCount truth = extreme_day_count(routes.truth, threshold);
      const ExtremeCount a = extreme_day_count(routes.route_a, threshold);
      const ExtremeCount b = extreme_day_count(routes.route_b, threshold);
      const auto& g = routes.truth.geometry();
      report.extremes.push_back({"truth" + suffix, extreme_rows(g, truth)});
      report.extremes.push_back({"route_a" + suffix, extreme_rows(g, a)});
      report.extremes.push_back({"route_b" + suffix, extreme_rows(g, b)});
      summary("extreme_total_truth" + suffix, static_cast<double>(truth.total()));
      summary("extreme_total_route_a" + suffix, static_cast<double>(a.total()));
      summary("extreme_total_route_b" + suffix, static_cast<double>(b.total()));
      summary("extreme_abs_err_route_a" + suffix, sum_abs_diff(a.total(), truth.total()));
      summary("extreme_abs_err_route_b" + suffix, sum_abs_diff(b.total(), truth.total()));
    };
    count_all(scaled, "");
    count_all(config.eval.extreme_threshold, "_flag");
  }
  return report;
}

namespace stage {

std::string gen(const PipelineConfig& config) {
  config.validate();
  const Layout L(config);
  ensure_parent(L.tp);
  ensure_parent(L.vimd);
  ensure_parent(L.config);
  const SynthConfig sc = config.synth_config();
  if (sc.nsteps % kStepsPerDay != 0)
    log("warning: nsteps={} is not a multiple of {}; extreme-day evaluation drops the trailing partial day", sc.nsteps,
        kStepsPerDay);
  log("generating {}x{}x{} synthetic fields", sc.nlat, sc.nlon, sc.nsteps);
  SynthFields f = synth_tp_vimd(sc);
  if (config.crop.enabled) {
    const auto& c = config.crop;
    f.tp = crop(f.tp, c.lat_lo, c.lat_hi, c.lon_lo, c.lon_hi);
    f.vimd = crop(f.vimd, c.lat_lo, c.lat_hi, c.lon_lo, c.lon_hi);
  }
  write_grid_series(f.tp, L.tp);
  write_grid_series(f.vimd, L.vimd);
  {
    std::ofstream out(L.config);
    out << config_json(config);
    require(static_cast<bool>(out), Errc::IoFailure, "cannot write " + L.config.string());
  }
  const FieldStats ts = field_stats(f.tp);
  const FieldStats vs = field_stats(f.vimd);
  return fmt::format(
      "gen steps={} nlat={} nlon={} tp_mean={:.6g} tp_std={:.6g} tp_max={:.6g} wet_fraction={:.6g} vimd_mean={:.6g} "
      "vimd_std={:.6g}",
      f.tp.size(), f.tp.nlat(), f.tp.nlon(), ts.mean, ts.std, ts.max, ts.wet_fraction.value_or(0.0), vs.mean, vs.std);
}

std::string train_pp(const PipelineConfig& config) {
  config.validate();
  const Layout L(config);
  const GridSeries tp = read_series(L.tp);
  const GridSeries vimd = read_series(L.vimd);
  ensure_parent(L.model);
  const TrainConfig tc = config.train_config();
  log("training on {} steps, {} epochs", tp.size(), tc.epochs);
  TrainResult result;
  try {
    result = pp::train_pp(tp, vimd, tc, [](const EpochRecord& r) {
      log("epoch {} l_quant={:.4g} l_rec={:.4g} mae={:.4g} ks={:.4g}", r.epoch, r.l_quant, r.l_rec, r.mae, r.ks);
    });
  } catch (const TrainDiverged& e) {
    save_model(e.partial().model, L.model);
    write_history_csv(e.partial().history, L.history);
    log("training diverged; best checkpoint written to {}", L.model.string());
    throw;
  }
  save_model(result.model, L.model);
  write_history_csv(result.history, L.history);
  const EpochRecord& best = result.history.epochs.at(result.history.best_epoch - 1);
  log("best epoch {} l_quant={:.4g}", best.epoch, best.l_quant);
  return fmt::format("ks={:.6g} mae={:.6g}", best.ks, best.mae);
}

std::string encode(const PipelineConfig& config) {
  config.validate();
  const Layout L(config);
  const GridSeries tp = read_series(L.tp);
  const GridSeries vimd = read_series(L.vimd);
  const PPModel model = read_model(L.model);
  const GridSeries pp = pp::encode(model, tp, vimd);
  ensure_parent(L.pp);
  write_grid_series(pp, L.pp);
  const FieldStats s = field_stats(pp);
  return fmt::format("encode steps={} pp_mean={:.6g} pp_std={:.6g} pp_min={:.6g} pp_max={:.6g}", pp.size(), s.mean,
                     s.std, s.min, s.max);
}

std::string decode(const PipelineConfig& config, const std::optional<std::filesystem::path>& input) {
  config.validate();
  const Layout L(config);
  const GridSeries pp = read_series(input.value_or(L.pp));
  require(pp.kind() == FieldKind::PP, Errc::KindMismatch,
          fmt::format("decode expects a PP field, got {}", kind_name(pp.kind())));
  const PPModel model = read_model(L.model);
  const GridSeries tp = pp::decode(model, pp);
  ensure_parent(L.decoded);
  write_grid_series(tp, L.decoded);
  const FieldStats s = field_stats(tp);
  return fmt::format("decode steps={} tp_mean={:.6g} tp_max={:.6g} wet_fraction={:.6g}", tp.size(), s.mean, s.max,
                     s.wet_fraction.value_or(0.0));
}

std::string make_pairs(const PipelineConfig& config, const std::optional<std::filesystem::path>& input) {
  config.validate();
  const Layout L(config);
  const GridSeries hr = read_series(input.value_or(L.pp));
  const PairSet pairs = pp::make_pairs(hr, config.factor, config.lowpass);
  ensure_parent(L.pairs_hr);
  write_grid_series(pairs.hr, L.pairs_hr);
  write_grid_series(pairs.lr, L.pairs_lr);
  return fmt::format("make-pairs kind={} steps={} hr={}x{} lr={}x{} factor={}", kind_name(hr.kind()), hr.size(),
                     pairs.hr.nlat(), pairs.hr.nlon(), pairs.lr.nlat(), pairs.lr.nlon(), pairs.factor);
}

std::string train_ds(const PipelineConfig& config) {
  config.validate();
  const Layout L(config);
  PairSet pairs{read_series(L.pairs_hr), read_series(L.pairs_lr), config.factor};
  require(pairs.hr.nlat() == pairs.lr.nlat() * config.factor && pairs.hr.nlon() == pairs.lr.nlon() * config.factor,
          Errc::DimensionMismatch, "pair files do not match the configured factor");
  const DSModel model = train_downscaler(pairs, config.ds_radius, config.ds_lambda);
  ensure_parent(L.ds_model);
  save_downscaler(model, L.ds_model);
  return fmt::format("train-ds samples={} offsets={} coeffs={} radius={} lambda={:.6g}", pairs.hr.size(),
                     model.coeffs.size(), model.patch_size() + 1, model.radius, model.lambda);
}

std::string downscale(const PipelineConfig& config, const std::optional<std::filesystem::path>& input) {
  config.validate();
  const Layout L(config);
  const GridSeries lr = read_series(input.value_or(L.pairs_lr));
  require_input(L.ds_model, "PPD1");
  const DSModel model = load_downscaler(L.ds_model);
  const GridSeries hr = apply_downscaler(model, lr);
  ensure_parent(L.downscaled);
  write_grid_series(hr, L.downscaled);
  return fmt::format("downscale kind={} steps={} lr={}x{} hr={}x{}", kind_name(hr.kind()), hr.size(), lr.nlat(),
                     lr.nlon(), hr.nlat(), hr.nlon());
}

std::string evaluate(const PipelineConfig& config) {
  config.validate();
  const Layout L(config);
  const GridSeries tp = read_series(L.tp);
  const GridSeries vimd = read_series(L.vimd);
  const PPModel model = read_model(L.model);
  const ReportData data = evaluate_suite(tp, vimd, model, config);
  std::error_code ec;
  std::filesystem::create_directories(L.eval_dir, ec);
  require(!ec, Errc::IoFailure, "cannot create " + L.eval_dir.string());
  write_metric_csvs(data, L.eval_dir);
  auto ringing = [&](const std::string& route) {
    for (const auto& g : data.gibbs)
      if (g.route == route && g.metric == "dry_region_ringing_energy") return g.value;
    return 0.0;
  };
  return fmt::format(
      "evaluate qq_maxdev_a={:.6g} qq_maxdev_b={:.6g} extreme_err_a={:.6g} extreme_err_b={:.6g} ringing_a={:.6g} "
      "ringing_b={:.6g}",
      summary_value(data, "qq_maxdev_route_a"), summary_value(data, "qq_maxdev_route_b"),
      summary_value(data, "extreme_abs_err_route_a"), summary_value(data, "extreme_abs_err_route_b"),
      ringing("route_a"), ringing("route_b"));
}

std::string report(const PipelineConfig& config) {
  config.validate();
  const Layout L(config);
  require(std::filesystem::is_directory(L.eval_dir), Errc::MissingInput, "missing input " + L.eval_dir.string());
  const ReportData data = read_metric_csvs(L.eval_dir);
  std::error_code ec;
  std::filesystem::create_directories(L.report_dir, ec);
  require(!ec, Errc::IoFailure, "cannot create " + L.report_dir.string());
  const auto files = emit_report(data, L.report_dir);
  return fmt::format("report files={} index={}", files.size(), (L.report_dir / "index.txt").string());
}

}  // namespace stage
}  // namespace pp
