#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pp/blend.hpp"
#include "pp/downscale.hpp"
#include "pp/eval.hpp"
#include "pp/spectral.hpp"
#include "pp/synth.hpp"

namespace pp {

/// Regional crop applied to generated fields. The default box covers
/// Europe and contains the whole synthetic domain.
struct CropConfig {
  bool enabled = true;
  double lat_lo = 35.0;
  double lat_hi = 72.0;
  double lon_lo = -25.0;
  double lon_hi = 45.0;
};

struct EvalConfig {
  // (row, column) on the high-resolution grid.
  std::vector<std::array<std::size_t, 2>> probe_cells{{24, 24}, {24, 72}, {48, 48}, {72, 24}, {72, 72}};
  double extreme_threshold = 20.0;  // mm/day
  double extreme_quantile = 0.995;  // of held-out daily totals, for the scaled threshold
  std::size_t segment_length = 256;
  std::size_t qq_points = 999;  // probabilities k / (qq_points + 1)
  double qq_max_prob = 0.99;
  std::size_t gibbs_steps = 64;
  std::size_t step_length = 4096;  // 1-D step demonstration

  void validate() const;
};

struct PipelineConfig {
  std::filesystem::path data_dir = "data";  // relative paths resolve against out_dir
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 20100101;
  CropConfig crop;
  SynthConfig synth;
  TrainConfig train;
  LowpassSpec lowpass;  // taper and padding; the cutoff is 1/factor
  std::size_t factor = 4;
  std::size_t ds_radius = 2;
  double ds_lambda = 1e-3;
  double train_fraction = 0.5;
  EvalConfig eval;

  /// Nested configs with the global seed applied.
  SynthConfig synth_config() const;
  TrainConfig train_config() const;
  RouteConfig route_config() const;
  void validate() const;
};

/// JSON text of a config; parse_config(config_json(c)) == c.
std::string config_json(const PipelineConfig& config);

/// Defaults, then the JSON file (if any), then each "dotted.key=value"
/// override in order. Values are read as JSON when they parse as JSON and
/// as strings otherwise. Unknown keys and invalid values raise BadConfig.
PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           std::span<const std::string> overrides = {});
PipelineConfig parse_config(const std::string& json_text, std::span<const std::string> overrides = {});

/// File locations of every stage artifact.
struct Layout {
  std::filesystem::path tp, vimd, config, model, history, pp, decoded, pairs_hr, pairs_lr, ds_model, downscaled,
      eval_dir, report_dir;

  explicit Layout(const PipelineConfig& config);
};

/// MissingInput when `path` does not exist, MalformedHeader when it does
/// not start with `magic`.
void require_input(const std::filesystem::path& path, std::string_view magic);

/// Process exit status for a library error: 2 missing input or too little
/// data, 3 numeric failure, 4 validation failure, 1 I/O.
int exit_code(const Error& error) noexcept;

// Pipeline stages. Each reads its inputs from the layout, writes its
// outputs, and returns a one-line machine-readable summary.
namespace stage {

std::string gen(const PipelineConfig& config);
std::string train_pp(const PipelineConfig& config);
std::string encode(const PipelineConfig& config);
std::string decode(const PipelineConfig& config, const std::optional<std::filesystem::path>& input = {});
std::string make_pairs(const PipelineConfig& config, const std::optional<std::filesystem::path>& input = {});
std::string train_ds(const PipelineConfig& config);
std::string downscale(const PipelineConfig& config, const std::optional<std::filesystem::path>& input = {});
std::string evaluate(const PipelineConfig& config);
std::string report(const PipelineConfig& config);

}  // namespace stage

/// Full evaluation suite on in-memory inputs (used by `stage::evaluate`).
ReportData evaluate_suite(const GridSeries& tp, const GridSeries& vimd, const PPModel& model,
                          const PipelineConfig& config);

/// Value of a summary entry; MalformedInput when absent.
double summary_value(const ReportData& data, std::string_view name);

}  // namespace pp
