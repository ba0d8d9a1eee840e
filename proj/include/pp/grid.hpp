#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace pp {

/// Physical field stored in a raster. TP is a 3-hourly accumulation in mm
/// (never negative), VIMD is signed (negative = convergence), PP is
/// dimensionless.
enum class FieldKind : std::uint8_t { TP = 0, VIMD = 1, PP = 2 };

std::string_view kind_name(FieldKind kind) noexcept;

/// Accumulation interval of every series, in seconds.
inline constexpr std::int64_t kStepSeconds = 10800;

/// Lat/lon descriptor shared by every step of a series. Latitudes run
/// north to south, rows are stored row-major. `mask[i] != 0` marks a valid
/// cell.
struct Geometry {
  FieldKind kind = FieldKind::TP;
  std::vector<double> lat;
  std::vector<double> lon;
  std::vector<std::uint8_t> mask;

  std::size_t nlat() const noexcept { return lat.size(); }
  std::size_t nlon() const noexcept { return lon.size(); }
  std::size_t cells() const noexcept { return lat.size() * lon.size(); }
  bool valid(std::size_t cell) const noexcept { return mask[cell] != 0; }

  /// Regular grid with every cell valid.
  static Geometry regular(FieldKind kind, std::size_t nlat, std::size_t nlon, double lat_north,
                          double lon_west, double spacing_deg);

  /// Same lat/lon/mask with a different field kind.
  Geometry with_kind(FieldKind k) const;

  /// Same lat/lon/mask/kind (kind is not compared by `same_layout`).
  bool same_layout(const Geometry& other) const noexcept;

  bool operator==(const Geometry&) const = default;
};

/// Throws pp::Error when the descriptor breaks a structural invariant.
void validate_geometry(const Geometry& g);

/// A single raster in double precision.
struct GeoGrid {
  Geometry geometry;
  std::vector<double> values;

  std::size_t nlat() const noexcept { return geometry.nlat(); }
  std::size_t nlon() const noexcept { return geometry.nlon(); }
  double at(std::size_t row, std::size_t col) const { return values[row * nlon() + col]; }
};

void validate_grid(const GeoGrid& grid);

/// Time-ordered raster sequence at 3-hour spacing. Values are held at
/// storage precision (f32) so that a file round trip is exact; callers
/// widen to double for arithmetic. Immutable after construction.
class GridSeries {
 public:
  GridSeries(std::shared_ptr<const Geometry> geometry, std::int64_t t0,
             std::vector<std::vector<float>> steps);
  GridSeries(Geometry geometry, std::int64_t t0, std::vector<std::vector<float>> steps)
      : GridSeries(std::make_shared<const Geometry>(std::move(geometry)), t0, std::move(steps)) {}

  /// As the constructor, but a TP series may hold negative values. Used for
  /// signed estimates of TP (band-limited or regressed fields); such a
  /// series is not a physical accumulation and the reader rejects it.
  static GridSeries signed_estimate(std::shared_ptr<const Geometry> geometry, std::int64_t t0,
                                    std::vector<std::vector<float>> steps);
  static GridSeries signed_estimate(Geometry geometry, std::int64_t t0, std::vector<std::vector<float>> steps) {
    return signed_estimate(std::make_shared<const Geometry>(std::move(geometry)), t0, std::move(steps));
  }

  /// True when any valid TP value is negative (only possible for signed
  /// estimates).
  bool has_negative_tp() const;

  const Geometry& geometry() const noexcept { return *geometry_; }
  const std::shared_ptr<const Geometry>& geometry_ptr() const noexcept { return geometry_; }
  FieldKind kind() const noexcept { return geometry_->kind; }
  std::size_t nlat() const noexcept { return geometry_->nlat(); }
  std::size_t nlon() const noexcept { return geometry_->nlon(); }
  std::size_t cells() const noexcept { return geometry_->cells(); }

  std::size_t size() const noexcept { return steps_.size(); }
  std::int64_t t0() const noexcept { return t0_; }
  std::int64_t dt() const noexcept { return kStepSeconds; }
  std::int64_t timestamp(std::size_t step) const noexcept {
    return t0_ + static_cast<std::int64_t>(step) * kStepSeconds;
  }

  std::span<const float> step(std::size_t i) const { return steps_.at(i); }
  const std::vector<std::vector<float>>& steps() const noexcept { return steps_; }

  /// Step `i` widened to a double-precision raster.
  GeoGrid grid(std::size_t i) const;

  /// Steps [first, first + count) as a new series sharing the geometry.
  GridSeries slice(std::size_t first, std::size_t count) const;

  /// Same geometry and timestamps (kind compared too).
  bool aligned_with(const GridSeries& other) const noexcept;

  bool operator==(const GridSeries& other) const;

 private:
  GridSeries(std::shared_ptr<const Geometry> geometry, std::int64_t t0, std::vector<std::vector<float>> steps,
             bool allow_negative_tp);

  std::shared_ptr<const Geometry> geometry_;
  std::int64_t t0_;
  std::vector<std::vector<float>> steps_;
};

/// Reads the PPG1 binary format; every invariant is checked and violations
/// are reported with the step index and byte offset.
GridSeries read_grid_series(const std::filesystem::path& path);
GridSeries parse_grid_series(std::span<const std::uint8_t> bytes);

void write_grid_series(const GridSeries& series, const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_grid_series(const GridSeries& series);

/// Sub-grid whose latitudes fall in [lat_lo, lat_hi] and longitudes in
/// [lon_lo, lon_hi] (bounds inclusive, either order).
GridSeries crop(const GridSeries& series, double lat_lo, double lat_hi, double lon_lo,
                double lon_hi);

struct FieldStats {
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::optional<double> wet_fraction;  // TP only
  std::size_t count = 0;
};

FieldStats field_stats(const GridSeries& series);

/// CSV with header `lat,lon,value`, one row per valid cell. Limited to
/// 10^4 cells.
void write_grid_csv(const GeoGrid& grid, const std::filesystem::path& path);
GeoGrid read_grid_csv(const std::filesystem::path& path, FieldKind kind);

inline constexpr std::size_t kCsvMaxCells = 10000;

}  // namespace pp
