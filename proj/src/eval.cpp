#include "pp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "pp/blend.hpp"
#include "pp/error.hpp"
#include "pp/fft.hpp"

namespace pp {

namespace {

namespace fs = std::filesystem;

constexpr std::int64_t kSecondsPerDay = 86400;

void require(bool ok, Errc code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

// Accumulates |X_k|^2 of mean-removed segments into `acc` (one-sided, with
// the doubling of interior bins applied later).
std::size_t accumulate_segments(std::span<const double> x, std::size_t L, std::vector<double>& acc) {
  const std::size_t nseg = x.size() / L;
  std::vector<Complex> buf(L);
  for (std::size_t s = 0; s < nseg; ++s) {
    const auto seg = x.subspan(s * L, L);
    double mean = 0.0;
    for (double v : seg) mean += v;
    mean /= static_cast<double>(L);
    for (std::size_t i = 0; i < L; ++i) buf[i] = Complex(seg[i] - mean, 0.0);
    const auto spec = dft2(buf, 1, L, false);  // unitary: sum |X|^2 = sum x^2
    for (std::size_t k = 0; k <= L / 2; ++k) acc[k] += std::norm(spec[k]);
  }
  return nseg;
}

PsdCurve finish_psd(std::vector<double> acc, std::size_t L, std::size_t segments) {
  PsdCurve c;
  const double per_day = static_cast<double>(kStepsPerDay);
  const double df = per_day / static_cast<double>(L);
  c.segments = segments;
  c.freq.resize(L / 2 + 1);
  c.power.resize(L / 2 + 1);
  for (std::size_t k = 0; k <= L / 2; ++k) {
    const bool edge = k == 0 || (L % 2 == 0 && k == L / 2);
    const double mean_sq = acc[k] / static_cast<double>(segments);
    c.freq[k] = static_cast<double>(k) * df;
    // Unitary |X_k|^2 sums to L * variance over the full spectrum.
    c.power[k] = (edge ? 1.0 : 2.0) * mean_sq / (static_cast<double>(L) * df);
  }
  return c;
}

void check_psd_input(std::size_t n, std::size_t L) {
  require(L >= 2, Errc::BadConfig, "segment length must be at least 2");
  require(n >= L, Errc::SeriesTooShort,
          "series of " + std::to_string(n) + " steps is shorter than the segment length " + std::to_string(L));
}

std::vector<double> cell_series(const GridSeries& series, std::size_t cell) {
  require(cell < series.cells(), Errc::DimensionMismatch,
          "cell " + std::to_string(cell) + " outside a grid of " + std::to_string(series.cells()) + " cells");
  require(series.geometry().valid(cell), Errc::MalformedInput, "cell " + std::to_string(cell) + " is masked");
  std::vector<double> x(series.size());
  for (std::size_t s = 0; s < series.size(); ++s) x[s] = series.step(s)[cell];
  return x;
}

void check_days(const GridSeries& tp) {
  require(tp.t0() % kSecondsPerDay == 0, Errc::MisalignedSeries,
          "series starts at " + std::to_string(tp.t0()) + ", not on a 00 UTC day boundary");
  require(tp.size() % kStepsPerDay == 0, Errc::MisalignedSeries,
          "series of " + std::to_string(tp.size()) + " steps does not span whole days");
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

// ---- CSV ------------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_table(const fs::path& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), Errc::IoFailure, "cannot open " + path.string() + " for writing");
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  require(static_cast<bool>(out.flush()), Errc::IoFailure, "failed writing " + path.string());
}

Table read_table(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::IoFailure, "cannot open " + path.string());
  Table t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  require(static_cast<bool>(std::getline(in, line)), Errc::MalformedInput, path.string() + " is empty");
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line);
    require(cells.size() == t.header.size(), Errc::MalformedInput,
            path.string() + " line " + std::to_string(lineno) + " has the wrong number of fields");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), Errc::MalformedInput, "not a number: '" + s + "'");
  return v;
}

// Groups consecutive rows by their label column, keeping first-seen order.
template <typename Entry, typename Fill>
std::vector<Entry> group_by_label(const Table& t, std::size_t label_col, Fill fill) {
  std::vector<Entry> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : t.rows) {
    auto [it, fresh] = index.emplace(r[label_col], out.size());
    if (fresh) {
      out.emplace_back();
      out.back().label = r[label_col];
    }
    fill(out[it->second], r);
  }
  return out;
}

// ---- SVG ------------------------------------------------------------------

constexpr double kW = 720, kH = 440, kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Line {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string svg_open(const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{:.1f}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
      kW, kH, kW, kH, kW / 2, escape(title));
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double map(double v, double a, double b) const {
    const double x = log ? std::log10(v) : v;
    return a + (x - lo) / (hi - lo) * (b - a);
  }
  std::string tick_label(double t) const { return log ? fmt::format("1e{:.0f}", t) : fmt::format("{:.3g}", t); }
};

Axis fit_axis(const std::vector<double>& values, bool log) {
  Axis ax;
  ax.log = log;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : values) {
    if (log && !(v > 0.0)) continue;
    const double x = log ? std::log10(v) : v;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  if (log) {
    lo = std::floor(lo);
    hi = std::ceil(hi);
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  ax.lo = lo;
  ax.hi = hi;
  return ax;
}

std::string axes_frame(const Axis& ax, const Axis& ay, const std::string& xlabel, const std::string& ylabel) {
  std::string s;
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"black\"/>\n",
                   x0, y1, x1 - x0, y0 - y1);
  for (int k = 0; k <= 4; ++k) {
    const double tx = ax.log ? std::round(ax.lo + (ax.hi - ax.lo) * k / 4.0) : ax.lo + (ax.hi - ax.lo) * k / 4.0;
    const double px = x0 + (tx - ax.lo) / (ax.hi - ax.lo) * (x1 - x0);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" "
                     "text-anchor=\"middle\">{}</text>\n",
                     px, y0 + 16, ax.tick_label(tx));
    const double ty = ay.log ? std::round(ay.lo + (ay.hi - ay.lo) * k / 4.0) : ay.lo + (ay.hi - ay.lo) * k / 4.0;
    const double py = y0 + (ty - ay.lo) / (ay.hi - ay.lo) * (y1 - y0);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" "
                     "text-anchor=\"end\">{}</text>\n",
                     x0 - 6, py + 4, ay.tick_label(ty));
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"13\" "
                   "text-anchor=\"middle\">{}</text>\n",
                   (x0 + x1) / 2, kH - 20, escape(xlabel));
  s += fmt::format("<text x=\"20\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
                   "transform=\"rotate(-90 20 {:.1f})\">{}</text>\n",
                   (y0 + y1) / 2, (y0 + y1) / 2, escape(ylabel));
  return s;
}

std::string legend(const std::vector<std::string>& labels) {
  std::string s;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = kTop + 14 + 18 * static_cast<double>(i);
    const double x = kW - kRight + 14;
    s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", x, y - 10,
                     kPalette[i % 6]);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
                     x + 18, y, escape(labels[i]));
  }
  return s;
}

std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       const std::vector<Line>& lines, bool logx, bool logy, bool diagonal) {
  std::vector<double> xs, ys;
  for (const auto& l : lines)
    for (auto [x, y] : l.points) {
      if ((logx && !(x > 0.0)) || (logy && !(y > 0.0))) continue;
      xs.push_back(x);
      ys.push_back(y);
    }
  if (diagonal) {
    // Shared range so the y = x reference is a true diagonal.
    std::vector<double> both(xs);
    both.insert(both.end(), ys.begin(), ys.end());
    xs = ys = both;
  }
  const Axis ax = fit_axis(xs, logx), ay = fit_axis(ys, logy);
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  std::string s = svg_open(title) + axes_frame(ax, ay, xlabel, ylabel);
  if (diagonal) {
    s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"gray\" "
                     "stroke-dasharray=\"4 3\"/>\n",
                     x0, y0, x1, y1);
  }
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string pts;
    for (auto [x, y] : lines[i].points) {
      if ((logx && !(x > 0.0)) || (logy && !(y > 0.0))) continue;
      pts += fmt::format("{:.2f},{:.2f} ", ax.map(x, x0, x1), ay.map(y, y0, y1));
    }
    if (!pts.empty()) pts.pop_back();
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", kPalette[i % 6],
                     pts);
    labels.push_back(lines[i].label);
  }
  return s + legend(labels) + "</svg>\n";
}

std::string bar_chart(const std::string& title, const std::string& ylabel, const std::vector<std::string>& labels,
                      const std::vector<double>& values) {
  std::vector<double> ys(values);
  ys.push_back(0.0);
  Axis ay = fit_axis(ys, false);
  ay.lo = std::min(0.0, ay.lo);
  const Axis ax{0.0, 1.0, false};
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  std::string s = svg_open(title) + axes_frame(ax, ay, "", ylabel);
  const double slot = (x1 - x0) / static_cast<double>(std::max<std::size_t>(values.size(), 1));
  const double zero = ay.map(0.0, y0, y1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double top = ay.map(values[i], y0, y1);
    s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                     x0 + slot * (static_cast<double>(i) + 0.2), std::min(top, zero), slot * 0.6,
                     std::abs(zero - top), kPalette[i % 6]);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
                     "text-anchor=\"middle\">{}</text>\n",
                     x0 + slot * (static_cast<double>(i) + 0.5), std::min(top, zero) - 4, fmt::format("{:.4g}", values[i]));
  }
  return s + legend(labels) + "</svg>\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), Errc::IoFailure, "cannot open " + path.string() + " for writing");
  out << text;
  require(static_cast<bool>(out.flush()), Errc::IoFailure, "failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), Errc::IoFailure, "cannot create directory " + dir.string());
}

}  // namespace

PsdCurve periodogram(std::span<const double> samples, std::size_t segment_length) {
  check_psd_input(samples.size(), segment_length);
  std::vector<double> acc(segment_length / 2 + 1, 0.0);
  const std::size_t nseg = accumulate_segments(samples, segment_length, acc);
  return finish_psd(std::move(acc), segment_length, nseg);
}

PsdCurve temporal_psd(const GridSeries& series, std::size_t cell, std::size_t segment_length) {
  const std::size_t c[] = {cell};
  return temporal_psd(series, c, segment_length);
}

PsdCurve temporal_psd(const GridSeries& series, std::span<const std::size_t> cells, std::size_t segment_length) {
  check_psd_input(series.size(), segment_length);
  require(!cells.empty(), Errc::BadConfig, "no probe cells given");
  std::vector<double> acc(segment_length / 2 + 1, 0.0);
  std::size_t nseg = 0;
  for (auto cell : cells) nseg += accumulate_segments(cell_series(series, cell), segment_length, acc);
  return finish_psd(std::move(acc), segment_length, nseg);
}

double QqData::max_deviation(double p_max) const {
  double worst = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (probs[i] <= p_max) worst = std::max(worst, std::abs(q_cand[i] - q_ref[i]));
  return worst;
}

QqData qq_data(std::span<const double> candidate, std::span<const double> reference, std::span<const double> probs) {
  require(!candidate.empty() && !reference.empty(), Errc::EmptySample, "Q-Q needs two nonempty samples");
  auto quantiles = [&](std::span<const double> x) {
    if (x.size() == 1) {
      for (double p : probs) require(p >= 0.0 && p <= 1.0, Errc::BadProb, "probability outside [0,1]");
      return std::vector<double>(probs.size(), x[0]);
    }
    return empirical_quantiles(x, probs);
  };
  return {std::vector<double>(probs.begin(), probs.end()), quantiles(candidate), quantiles(reference)};
}

std::vector<double> valid_values(const GridSeries& series) {
  const auto& g = series.geometry();
  std::vector<double> out;
  for (std::size_t s = 0; s < series.size(); ++s) {
    auto v = series.step(s);
    for (std::size_t c = 0; c < v.size(); ++c)
      if (g.valid(c)) out.push_back(v[c]);
  }
  return out;
}

std::uint64_t ExtremeCount::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

ExtremeCount extreme_day_count(const GridSeries& tp, double threshold) {
  require(tp.kind() == FieldKind::TP, Errc::KindMismatch, "extreme days need a TP series");
  check_days(tp);
  const auto& g = tp.geometry();
  ExtremeCount out;
  out.threshold = threshold;
  out.days = tp.size() / kStepsPerDay;
  out.counts.assign(g.cells(), 0);
  std::vector<double> daily(g.cells());
  for (std::size_t d = 0; d < out.days; ++d) {
    std::fill(daily.begin(), daily.end(), 0.0);
    for (std::size_t k = 0; k < kStepsPerDay; ++k) {
      auto v = tp.step(d * kStepsPerDay + k);
      for (std::size_t c = 0; c < daily.size(); ++c) daily[c] += v[c];
    }
    for (std::size_t c = 0; c < daily.size(); ++c)
      if (g.valid(c) && daily[c] > threshold) ++out.counts[c];
  }
  return out;
}

std::vector<double> daily_totals(const GridSeries& tp) {
  check_days(tp);
  const auto& g = tp.geometry();
  std::vector<double> out;
  std::vector<double> daily(g.cells());
  for (std::size_t d = 0; d < tp.size() / kStepsPerDay; ++d) {
    std::fill(daily.begin(), daily.end(), 0.0);
    for (std::size_t k = 0; k < kStepsPerDay; ++k) {
      auto v = tp.step(d * kStepsPerDay + k);
      for (std::size_t c = 0; c < daily.size(); ++c) daily[c] += v[c];
    }
    for (std::size_t c = 0; c < daily.size(); ++c)
      if (g.valid(c)) out.push_back(daily[c]);
  }
  return out;
}

GridSeries whole_days(const GridSeries& series) {
  const std::size_t n = series.size() / kStepsPerDay * kStepsPerDay;
  require(n > 0, Errc::MisalignedSeries, "series is shorter than one day");
  return n == series.size() ? series : series.slice(0, n);
}

std::vector<ExtremeRow> extreme_rows(const Geometry& geometry, const ExtremeCount& counts) {
  require(counts.counts.size() == geometry.cells(), Errc::DimensionMismatch, "count grid does not match geometry");
  std::vector<ExtremeRow> rows;
  for (std::size_t i = 0; i < geometry.nlat(); ++i)
    for (std::size_t j = 0; j < geometry.nlon(); ++j) {
      const std::size_t c = i * geometry.nlon() + j;
      if (geometry.valid(c)) rows.push_back({geometry.lat[i], geometry.lon[j], counts.counts[c]});
    }
  return rows;
}

void append_gibbs(std::vector<GibbsEntry>& out, const std::string& route, const GibbsReport& report) {
  out.push_back({"negative_cell_fraction", route, report.negative_cell_fraction});
  out.push_back({"max_overshoot_ratio", route, report.max_overshoot_ratio});
  out.push_back({"dry_region_ringing_energy", route, report.dry_region_ringing_energy});
}

std::vector<fs::path> write_metric_csvs(const ReportData& data, const fs::path& dir) {
  require(!data.empty(), Errc::MalformedInput, "report has no metrics to write");
  ensure_dir(dir);
  std::vector<fs::path> written;
  if (!data.psd.empty()) {
    Table t{{"freq", "power", "segments", "series"}, {}};
    for (const auto& e : data.psd)
      for (std::size_t k = 0; k < e.curve.freq.size(); ++k)
        t.rows.push_back({num(e.curve.freq[k]), num(e.curve.power[k]), std::to_string(e.curve.segments), e.label});
    write_table(dir / "psd.csv", t);
    written.push_back(dir / "psd.csv");
  }
  if (!data.qq.empty()) {
    Table t{{"prob", "q_cand", "q_ref", "series"}, {}};
    for (const auto& e : data.qq)
      for (std::size_t k = 0; k < e.data.probs.size(); ++k)
        t.rows.push_back({num(e.data.probs[k]), num(e.data.q_cand[k]), num(e.data.q_ref[k]), e.label});
    write_table(dir / "qq.csv", t);
    written.push_back(dir / "qq.csv");
  }
  if (!data.extremes.empty()) {
    Table t{{"lat", "lon", "count", "series"}, {}};
    for (const auto& e : data.extremes)
      for (const auto& r : e.rows) t.rows.push_back({num(r.lat), num(r.lon), std::to_string(r.count), e.label});
    write_table(dir / "extremes.csv", t);
    written.push_back(dir / "extremes.csv");
  }
  if (!data.gibbs.empty()) {
    Table t{{"metric", "route", "value"}, {}};
    for (const auto& e : data.gibbs) t.rows.push_back({e.metric, e.route, num(e.value)});
    write_table(dir / "gibbs.csv", t);
    written.push_back(dir / "gibbs.csv");
  }
  if (!data.summary.empty()) {
    Table t{{"name", "value"}, {}};
    for (const auto& e : data.summary) t.rows.push_back({e.name, num(e.value)});
    write_table(dir / "summary.csv", t);
    written.push_back(dir / "summary.csv");
  }
  return written;
}

ReportData read_metric_csvs(const fs::path& dir) {
  ReportData d;
  auto expect = [](const Table& t, std::vector<std::string> header, const fs::path& p) {
    require(t.header == header, Errc::MalformedInput, p.string() + " has an unexpected header");
  };
  if (fs::exists(dir / "psd.csv")) {
    const auto t = read_table(dir / "psd.csv");
    expect(t, {"freq", "power", "segments", "series"}, dir / "psd.csv");
    d.psd = group_by_label<PsdEntry>(t, 3, [](PsdEntry& e, const auto& r) {
      e.curve.freq.push_back(to_double(r[0]));
      e.curve.power.push_back(to_double(r[1]));
      e.curve.segments = static_cast<std::size_t>(to_double(r[2]));
    });
  }
  if (fs::exists(dir / "qq.csv")) {
    const auto t = read_table(dir / "qq.csv");
    expect(t, {"prob", "q_cand", "q_ref", "series"}, dir / "qq.csv");
    d.qq = group_by_label<QqEntry>(t, 3, [](QqEntry& e, const auto& r) {
      e.data.probs.push_back(to_double(r[0]));
      e.data.q_cand.push_back(to_double(r[1]));
      e.data.q_ref.push_back(to_double(r[2]));
    });
  }
  if (fs::exists(dir / "extremes.csv")) {
    const auto t = read_table(dir / "extremes.csv");
    expect(t, {"lat", "lon", "count", "series"}, dir / "extremes.csv");
    d.extremes = group_by_label<ExtremeEntry>(t, 3, [](ExtremeEntry& e, const auto& r) {
      e.rows.push_back({to_double(r[0]), to_double(r[1]), static_cast<std::uint32_t>(to_double(r[2]))});
    });
  }
  if (fs::exists(dir / "gibbs.csv")) {
    const auto t = read_table(dir / "gibbs.csv");
    expect(t, {"metric", "route", "value"}, dir / "gibbs.csv");
    for (const auto& r : t.rows) d.gibbs.push_back({r[0], r[1], to_double(r[2])});
  }
  if (fs::exists(dir / "summary.csv")) {
    const auto t = read_table(dir / "summary.csv");
    expect(t, {"name", "value"}, dir / "summary.csv");
    for (const auto& r : t.rows) d.summary.push_back({r[0], to_double(r[1])});
  }
  return d;
}

std::vector<fs::path> render_svgs(const ReportData& data, const fs::path& dir) {
  require(!data.empty(), Errc::MalformedInput, "report has no metrics to render");
  ensure_dir(dir);
  std::vector<fs::path> written;
  if (!data.psd.empty()) {
    std::vector<Line> lines;
    for (const auto& e : data.psd) {
      Line l{e.label, {}};
      for (std::size_t k = 1; k < e.curve.freq.size(); ++k) l.points.emplace_back(e.curve.freq[k], e.curve.power[k]);
      lines.push_back(std::move(l));
    }
    write_text(dir / "psd.svg", line_chart("Temporal power spectral density", "frequency (cycles/day)",
                                           "power", lines, true, true, false));
    written.push_back(dir / "psd.svg");
  }
  if (!data.qq.empty()) {
    std::vector<Line> lines;
    for (const auto& e : data.qq) {
      Line l{e.label, {}};
      for (std::size_t k = 0; k < e.data.probs.size(); ++k) l.points.emplace_back(e.data.q_ref[k], e.data.q_cand[k]);
      lines.push_back(std::move(l));
    }
    write_text(dir / "qq.svg", line_chart("Q-Q", "reference quantile", "candidate quantile", lines, false, false, true));
    written.push_back(dir / "qq.svg");
  }
  if (!data.extremes.empty()) {
    std::vector<std::string> labels;
    std::vector<double> totals;
    for (const auto& e : data.extremes) {
      double t = 0.0;
      for (const auto& r : e.rows) t += r.count;
      labels.push_back(e.label);
      totals.push_back(t);
    }
    write_text(dir / "extremes.svg", bar_chart("Extreme days (all cells)", "cell-days", labels, totals));
    written.push_back(dir / "extremes.svg");
  }
  if (!data.gibbs.empty()) {
    std::vector<std::string> metrics;
    for (const auto& e : data.gibbs)
      if (std::find(metrics.begin(), metrics.end(), e.metric) == metrics.end()) metrics.push_back(e.metric);
    for (const auto& m : metrics) {
      std::vector<std::string> labels;
      std::vector<double> values;
      for (const auto& e : data.gibbs)
        if (e.metric == m) {
          labels.push_back(e.route);
          values.push_back(e.value);
        }
      const auto path = dir / ("gibbs_" + m + ".svg");
      write_text(path, bar_chart(m, m, labels, values));
      written.push_back(path);
    }
  }
  return written;
}

std::vector<fs::path> emit_report(const ReportData& data, const fs::path& dir) {
  auto files = write_metric_csvs(data, dir);
  for (auto& p : render_svgs(data, dir)) files.push_back(std::move(p));
  std::string index;
  for (const auto& p : files) index += p.filename().string() + "\n";
  write_text(dir / "index.txt", index);
  files.push_back(dir / "index.txt");
  return files;
}

}  // namespace pp
