#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pp/grid.hpp"
#include "pp/spectral.hpp"

namespace pp {

/// Steps per day at 3-hourly sampling.
inline constexpr std::size_t kStepsPerDay = 8;

/// One-sided mean periodogram. `freq` is in cycles per day (Nyquist = 4),
/// `power` in squared field units per cycle/day, normalized so that
/// sum(power) * bin_width equals the mean variance of the mean-removed
/// segments.
struct PsdCurve {
  std::vector<double> freq;
  std::vector<double> power;
  std::size_t segments = 0;

  double bin_width() const noexcept { return freq.size() > 1 ? freq[1] - freq[0] : 0.0; }
};

/// Non-overlapping segments of length L from the start of the series;
/// SeriesTooShort when the series is shorter than L.
PsdCurve temporal_psd(const GridSeries& series, std::size_t cell, std::size_t segment_length = 256);

/// Average over several cells (segments are pooled).
PsdCurve temporal_psd(const GridSeries& series, std::span<const std::size_t> cells,
                      std::size_t segment_length = 256);

/// Periodogram of a plain sample sequence, for the same estimator on data
/// that is not a grid series.
PsdCurve periodogram(std::span<const double> samples, std::size_t segment_length);

struct QqData {
  std::vector<double> probs;
  std::vector<double> q_cand;
  std::vector<double> q_ref;

  /// max |q_cand - q_ref| over probs <= p_max.
  double max_deviation(double p_max = 1.0) const;
};

/// Paired empirical quantiles (sorted-sample linear interpolation).
QqData qq_data(std::span<const double> candidate, std::span<const double> reference, std::span<const double> probs);

/// Valid-cell values of every step, in storage order.
std::vector<double> valid_values(const GridSeries& series);

/// Days with daily total (8 consecutive steps from the series start)
/// strictly above `threshold` mm, per cell. Masked cells count 0.
struct ExtremeCount {
  double threshold = 20.0;
  std::size_t days = 0;
  std::vector<std::uint32_t> counts;

  std::uint64_t total() const noexcept;
};

/// MisalignedSeries unless the series starts at 00 UTC and spans whole
/// days. KindMismatch for a non-TP series.
ExtremeCount extreme_day_count(const GridSeries& tp, double threshold = 20.0);

/// Daily totals of every valid cell (same day alignment as
/// extreme_day_count).
std::vector<double> daily_totals(const GridSeries& tp);

/// Leading whole days of a series (drops a trailing partial day).
GridSeries whole_days(const GridSeries& series);

// Report bundle. Each table carries a label column after the documented
// columns so several series share one file.

struct PsdEntry {
  std::string label;
  PsdCurve curve;
};
struct QqEntry {
  std::string label;
  QqData data;
};
struct ExtremeRow {
  double lat = 0.0;
  double lon = 0.0;
  std::uint32_t count = 0;
};
struct ExtremeEntry {
  std::string label;
  std::vector<ExtremeRow> rows;
};
struct GibbsEntry {
  std::string metric;
  std::string route;
  double value = 0.0;
};
struct SummaryEntry {
  std::string name;
  double value = 0.0;
};

struct ReportData {
  std::vector<PsdEntry> psd;
  std::vector<QqEntry> qq;
  std::vector<ExtremeEntry> extremes;
  std::vector<GibbsEntry> gibbs;
  std::vector<SummaryEntry> summary;

  bool empty() const noexcept {
    return psd.empty() && qq.empty() && extremes.empty() && gibbs.empty() && summary.empty();
  }
};

std::vector<ExtremeRow> extreme_rows(const Geometry& geometry, const ExtremeCount& counts);

void append_gibbs(std::vector<GibbsEntry>& out, const std::string& route, const GibbsReport& report);

/// psd.csv, qq.csv, extremes.csv, gibbs.csv, summary.csv (only those with
/// data). MalformedInput when every table is empty. Returns written paths.
std::vector<std::filesystem::path> write_metric_csvs(const ReportData& data, const std::filesystem::path& dir);

/// Reads back whatever tables exist in `dir`.
ReportData read_metric_csvs(const std::filesystem::path& dir);

/// Deterministic SVG charts for the tables present.
std::vector<std::filesystem::path> render_svgs(const ReportData& data, const std::filesystem::path& dir);

/// CSV tables, SVG charts and an index.txt listing every emitted file.
std::vector<std::filesystem::path> emit_report(const ReportData& data, const std::filesystem::path& dir);

}  // namespace pp
