#include "pp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "pp/bytes.hpp"
#include "pp/error.hpp"

namespace pp {

namespace {

constexpr std::string_view kMagic = "PPG1";

bool strictly_monotone(const std::vector<double>& v) {
  if (v.size() < 2) return true;
  bool inc = v[1] > v[0];
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || (inc ? !(v[i] > v[i - 1]) : !(v[i] < v[i - 1]))) return false;
  }
  return std::isfinite(v[0]);
}

bool uniform_spacing(const std::vector<double>& v) {
  if (v.size() < 3) return true;
  double d = v[1] - v[0];
  double tol = 1e-9 * std::max(1.0, std::abs(v.back() - v.front()));
  for (std::size_t i = 2; i < v.size(); ++i) {
    if (std::abs((v[i] - v[i - 1]) - d) > tol) return false;
  }
  return true;
}

void check_values(const Geometry& g, std::span<const float> values, std::size_t step,
                  std::size_t base_offset, bool allow_negative_tp = false) {
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (!g.valid(c)) continue;
    float v = values[c];
    if (!std::isfinite(v)) {
      throw Error(Errc::NonFiniteValue, "step " + std::to_string(step) + " cell " +
                                            std::to_string(c) + " offset " +
                                            std::to_string(base_offset + 4 * c));
    }
    if (g.kind == FieldKind::TP && v < 0.0f && !allow_negative_tp) {
      throw Error(Errc::NegativeTP, "step " + std::to_string(step) + " cell " +
                                        std::to_string(c) + " offset " +
                                        std::to_string(base_offset + 4 * c));
    }
  }
}

}  // namespace

std::string_view kind_name(FieldKind kind) noexcept {
  switch (kind) {
    case FieldKind::TP: return "TP";
    case FieldKind::VIMD: return "VIMD";
    case FieldKind::PP: return "PP";
  }
  return "?";
}

Geometry Geometry::regular(FieldKind kind, std::size_t nlat, std::size_t nlon, double lat_north,
                           double lon_west, double spacing_deg) {
  Geometry g;
  g.kind = kind;
  g.lat.resize(nlat);
  g.lon.resize(nlon);
  for (std::size_t i = 0; i < nlat; ++i) g.lat[i] = lat_north - spacing_deg * static_cast<double>(i);
  for (std::size_t j = 0; j < nlon; ++j) g.lon[j] = lon_west + spacing_deg * static_cast<double>(j);
  g.mask.assign(nlat * nlon, 1);
  return g;
}

Geometry Geometry::with_kind(FieldKind k) const {
  Geometry g = *this;
  g.kind = k;
  return g;
}

bool Geometry::same_layout(const Geometry& other) const noexcept {
  return lat == other.lat && lon == other.lon && mask == other.mask;
}

void validate_geometry(const Geometry& g) {
  if (g.lat.empty() || g.lon.empty()) throw Error(Errc::MalformedInput, "empty lat or lon axis");
  if (static_cast<std::uint8_t>(g.kind) > 2) throw Error(Errc::MalformedInput, "unknown field kind");
  if (!strictly_monotone(g.lat)) throw Error(Errc::MalformedInput, "latitudes not strictly monotone");
  if (!strictly_monotone(g.lon)) throw Error(Errc::MalformedInput, "longitudes not strictly monotone");
  if (!uniform_spacing(g.lon)) throw Error(Errc::MalformedInput, "longitudes not uniformly spaced");
  if (g.mask.size() != g.cells()) {
    throw Error(Errc::DimensionMismatch, "mask length " + std::to_string(g.mask.size()) +
                                             " != nlat*nlon " + std::to_string(g.cells()));
  }
}

void validate_grid(const GeoGrid& grid) {
  validate_geometry(grid.geometry);
  if (grid.values.size() != grid.geometry.cells()) {
    throw Error(Errc::DimensionMismatch, "values length " + std::to_string(grid.values.size()) +
                                             " != nlat*nlon " + std::to_string(grid.geometry.cells()));
  }
  for (std::size_t c = 0; c < grid.values.size(); ++c) {
    if (!grid.geometry.valid(c)) continue;
    if (!std::isfinite(grid.values[c])) throw Error(Errc::NonFiniteValue, "cell " + std::to_string(c));
    if (grid.geometry.kind == FieldKind::TP && grid.values[c] < 0.0)
      throw Error(Errc::NegativeTP, "cell " + std::to_string(c));
  }
}

GridSeries::GridSeries(std::shared_ptr<const Geometry> geometry, std::int64_t t0,
                       std::vector<std::vector<float>> steps)
    : GridSeries(std::move(geometry), t0, std::move(steps), false) {}

GridSeries GridSeries::signed_estimate(std::shared_ptr<const Geometry> geometry, std::int64_t t0,
                                       std::vector<std::vector<float>> steps) {
  return GridSeries(std::move(geometry), t0, std::move(steps), true);
}

bool GridSeries::has_negative_tp() const {
  if (kind() != FieldKind::TP) return false;
  for (const auto& step : steps_)
    for (std::size_t c = 0; c < step.size(); ++c)
      if (geometry_->valid(c) && step[c] < 0.0f) return true;
  return false;
}

GridSeries::GridSeries(std::shared_ptr<const Geometry> geometry, std::int64_t t0,
                       std::vector<std::vector<float>> steps, bool allow_negative_tp)
    : geometry_(std::move(geometry)), t0_(t0), steps_(std::move(steps)) {
  if (!geometry_) throw Error(Errc::MalformedInput, "null geometry");
  validate_geometry(*geometry_);
  if (steps_.empty()) throw Error(Errc::MalformedInput, "series has zero steps");
  for (std::size_t s = 0; s < steps_.size(); ++s) {
    if (steps_[s].size() != geometry_->cells()) {
      throw Error(Errc::DimensionMismatch, "step " + std::to_string(s) + " has " +
                                               std::to_string(steps_[s].size()) + " values, expected " +
                                               std::to_string(geometry_->cells()));
    }
    check_values(*geometry_, steps_[s], s, 0, allow_negative_tp);
  }
}

GeoGrid GridSeries::grid(std::size_t i) const {
  const auto& src = steps_.at(i);
  GeoGrid g{*geometry_, std::vector<double>(src.begin(), src.end())};
  return g;
}

GridSeries GridSeries::slice(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > steps_.size())
    throw Error(Errc::MalformedInput, "slice out of range");
  std::vector<std::vector<float>> sub(steps_.begin() + static_cast<std::ptrdiff_t>(first),
                                      steps_.begin() + static_cast<std::ptrdiff_t>(first + count));
  return GridSeries(geometry_, timestamp(first), std::move(sub), true);
}

bool GridSeries::aligned_with(const GridSeries& other) const noexcept {
  return geometry_->same_layout(*other.geometry_) && t0_ == other.t0_ &&
         steps_.size() == other.steps_.size();
}

bool GridSeries::operator==(const GridSeries& other) const {
  if (!(*geometry_ == *other.geometry_) || t0_ != other.t0_ || steps_.size() != other.steps_.size())
    return false;
  for (std::size_t s = 0; s < steps_.size(); ++s) {
    if (std::memcmp(steps_[s].data(), other.steps_[s].data(), steps_[s].size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

std::vector<std::uint8_t> serialize_grid_series(const GridSeries& series) {
  const Geometry& g = series.geometry();
  ByteWriter w;
  w.magic(kMagic);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(g.kind));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.nlat()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.nlon()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(series.size()));
  w.put_all<double>(g.lat);
  w.put_all<double>(g.lon);
  w.put<std::int64_t>(series.t0());
  w.put<std::int64_t>(series.dt());
  for (const auto& step : series.steps()) w.put_all<float>(step);
  std::vector<std::uint8_t> packed((g.cells() + 7) / 8, 0);
  for (std::size_t c = 0; c < g.cells(); ++c) {
    if (g.valid(c)) packed[c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
  }
  w.put_all<std::uint8_t>(packed);
  return std::move(w.bytes());
}

GridSeries parse_grid_series(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, Errc::MalformedHeader);
  if (!r.magic(kMagic)) throw Error(Errc::MalformedHeader, "bad magic at offset 0 (expected PPG1)");
  auto kind = r.get<std::uint8_t>("kind");
  if (kind > 2) throw Error(Errc::MalformedHeader, "unknown kind " + std::to_string(kind) + " at offset 4");
  auto nlat = r.get<std::uint32_t>("nlat");
  auto nlon = r.get<std::uint32_t>("nlon");
  auto nsteps = r.get<std::uint32_t>("nsteps");
  if (nlat == 0 || nlon == 0) throw Error(Errc::MalformedHeader, "zero grid dimension at offset 5");
  if (nsteps == 0) throw Error(Errc::MalformedHeader, "zero steps at offset 13");

  Geometry g;
  g.kind = static_cast<FieldKind>(kind);
  r.need(8ull * (nlat + nlon), "axes");
  g.lat.resize(nlat);
  g.lon.resize(nlon);
  r.get_all<double>(g.lat, "lat");
  r.get_all<double>(g.lon, "lon");
  if (!strictly_monotone(g.lat)) throw Error(Errc::MalformedHeader, "latitudes not strictly monotone at offset 17");
  if (!strictly_monotone(g.lon) || !uniform_spacing(g.lon))
    throw Error(Errc::MalformedHeader, "longitudes not strictly monotone and uniform at offset " +
                                           std::to_string(17 + 8ull * nlat));
  auto t0 = r.get<std::int64_t>("t0");
  std::size_t dt_offset = r.offset();
  auto dt = r.get<std::int64_t>("dt");
  if (dt != kStepSeconds)
    throw Error(Errc::MalformedHeader, "dt " + std::to_string(dt) + " != 10800 at offset " +
                                           std::to_string(dt_offset));

  const std::size_t cells = static_cast<std::size_t>(nlat) * nlon;
  const std::size_t step_bytes = cells * sizeof(float);
  const std::size_t mask_bytes = (cells + 7) / 8;
  const std::size_t data_offset = r.offset();
  const std::size_t expected = step_bytes * nsteps + mask_bytes;
  if (r.remaining() != expected) {
    throw Error(Errc::DimensionMismatch, "payload is " + std::to_string(r.remaining()) +
                                             " bytes, header implies " + std::to_string(expected) +
                                             " (data starts at offset " + std::to_string(data_offset) + ")");
  }

  const std::uint8_t* mask_src = bytes.data() + data_offset + step_bytes * nsteps;
  g.mask.resize(cells);
  for (std::size_t c = 0; c < cells; ++c) g.mask[c] = (mask_src[c / 8] >> (c % 8)) & 1u;

  std::vector<std::vector<float>> steps(nsteps, std::vector<float>(cells));
  for (std::size_t s = 0; s < nsteps; ++s) {
    std::size_t off = r.offset();
    r.get_all<float>(steps[s], "step");
    check_values(g, steps[s], s, off);
  }
  return GridSeries(std::move(g), t0, std::move(steps));
}

GridSeries read_grid_series(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return parse_grid_series(bytes);
}

void write_grid_series(const GridSeries& series, const std::filesystem::path& path) {
  write_file(path, serialize_grid_series(series));
}

GridSeries crop(const GridSeries& series, double lat_lo, double lat_hi, double lon_lo, double lon_hi) {
  if (lat_lo > lat_hi) std::swap(lat_lo, lat_hi);
  if (lon_lo > lon_hi) std::swap(lon_lo, lon_hi);
  const Geometry& g = series.geometry();
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < g.nlat(); ++i)
    if (g.lat[i] >= lat_lo && g.lat[i] <= lat_hi) rows.push_back(i);
  for (std::size_t j = 0; j < g.nlon(); ++j)
    if (g.lon[j] >= lon_lo && g.lon[j] <= lon_hi) cols.push_back(j);
  if (rows.empty() || cols.empty()) throw Error(Errc::EmptyIntersection, "crop range misses the grid");

  Geometry sub;
  sub.kind = g.kind;
  for (auto i : rows) sub.lat.push_back(g.lat[i]);
  for (auto j : cols) sub.lon.push_back(g.lon[j]);
  sub.mask.reserve(rows.size() * cols.size());
  for (auto i : rows)
    for (auto j : cols) sub.mask.push_back(g.mask[i * g.nlon() + j]);

  std::vector<std::vector<float>> steps(series.size());
  for (std::size_t s = 0; s < series.size(); ++s) {
    auto src = series.step(s);
    auto& dst = steps[s];
    dst.reserve(sub.cells());
    for (auto i : rows)
      for (auto j : cols) dst.push_back(src[i * g.nlon() + j]);
  }
  auto geometry = std::make_shared<const Geometry>(std::move(sub));
  if (series.has_negative_tp()) return GridSeries::signed_estimate(geometry, series.t0(), std::move(steps));
  return GridSeries(geometry, series.t0(), std::move(steps));
}

FieldStats field_stats(const GridSeries& series) {
  const Geometry& g = series.geometry();
  FieldStats st;
  double sum = 0.0, sumsq = 0.0;
  std::size_t wet = 0;
  st.min = std::numeric_limits<double>::infinity();
  st.max = -std::numeric_limits<double>::infinity();
  // Two passes keep the variance free of cancellation for large means.
  for (const auto& step : series.steps()) {
    for (std::size_t c = 0; c < step.size(); ++c) {
      if (!g.valid(c)) continue;
      double v = step[c];
      sum += v;
      st.min = std::min(st.min, v);
      st.max = std::max(st.max, v);
      if (v > 0.0) ++wet;
      ++st.count;
    }
  }
  if (st.count == 0) return FieldStats{};
  st.mean = sum / static_cast<double>(st.count);
  for (const auto& step : series.steps()) {
    for (std::size_t c = 0; c < step.size(); ++c) {
      if (!g.valid(c)) continue;
      double d = step[c] - st.mean;
      sumsq += d * d;
    }
  }
  st.std = std::sqrt(sumsq / static_cast<double>(st.count));
  if (g.kind == FieldKind::TP) st.wet_fraction = static_cast<double>(wet) / static_cast<double>(st.count);
  return st;
}

void write_grid_csv(const GeoGrid& grid, const std::filesystem::path& path) {
  if (grid.geometry.cells() > kCsvMaxCells)
    throw Error(Errc::MalformedInput, "grid has more than 10^4 cells; use PPG");
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoFailure, "cannot open " + path.string());
  out << "lat,lon,value\n" << std::setprecision(17);
  const auto& g = grid.geometry;
  for (std::size_t i = 0; i < g.nlat(); ++i) {
    for (std::size_t j = 0; j < g.nlon(); ++j) {
      std::size_t c = i * g.nlon() + j;
      if (!g.valid(c)) continue;
      out << g.lat[i] << ',' << g.lon[j] << ',' << grid.values[c] << '\n';
    }
  }
  if (!out) throw Error(Errc::IoFailure, "write failed for " + path.string());
}

GeoGrid read_grid_csv(const std::filesystem::path& path, FieldKind kind) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("lat,lon,value", 0) != 0)
    throw Error(Errc::MalformedHeader, "expected header lat,lon,value in " + path.string());

  struct Row { double lat, lon, value; };
  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Row r{};
    char c1 = 0, c2 = 0;
    if (!(ss >> r.lat >> c1 >> r.lon >> c2 >> r.value) || c1 != ',' || c2 != ',')
      throw Error(Errc::MalformedInput, "bad CSV row at line " + std::to_string(lineno));
    rows.push_back(r);
    if (rows.size() > kCsvMaxCells) throw Error(Errc::MalformedInput, "CSV exceeds 10^4 cells");
  }
  if (rows.empty()) throw Error(Errc::MalformedInput, "CSV has no rows");

  std::vector<double> lats, lons;
  for (const auto& r : rows) {
    lats.push_back(r.lat);
    lons.push_back(r.lon);
  }
  std::sort(lats.begin(), lats.end(), std::greater<>());
  lats.erase(std::unique(lats.begin(), lats.end()), lats.end());
  std::sort(lons.begin(), lons.end());
  lons.erase(std::unique(lons.begin(), lons.end()), lons.end());

  GeoGrid grid;
  grid.geometry.kind = kind;
  grid.geometry.lat = lats;
  grid.geometry.lon = lons;
  grid.geometry.mask.assign(lats.size() * lons.size(), 0);
  grid.values.assign(lats.size() * lons.size(), 0.0);
  for (const auto& r : rows) {
    auto i = static_cast<std::size_t>(std::find(lats.begin(), lats.end(), r.lat) - lats.begin());
    auto j = static_cast<std::size_t>(std::find(lons.begin(), lons.end(), r.lon) - lons.begin());
    std::size_t c = i * lons.size() + j;
    if (grid.geometry.mask[c]) throw Error(Errc::MalformedInput, "duplicate cell in CSV");
    grid.geometry.mask[c] = 1;
    grid.values[c] = r.value;
  }
  validate_grid(grid);
  return grid;
}

}  // namespace pp
