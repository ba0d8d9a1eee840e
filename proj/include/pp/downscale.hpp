#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pp/grid.hpp"
#include "pp/netcore.hpp"
#include "pp/spectral.hpp"

namespace pp {

/// Linear super-resolver: for each of the f*f sub-pixel offsets (a, b), HR
/// cell (I*f + a, J*f + b) is predicted from the (2r+1)^2 LR patch centred
/// on (I, J) plus a bias. Coefficients are stored patch row-major, bias
/// last; offsets are ordered a-major.
struct DSModel {
  std::size_t factor = 4;
  std::size_t radius = 2;
  double lambda = 1e-3;
  std::vector<std::vector<double>> coeffs;

  std::size_t patch_size() const noexcept { return (2 * radius + 1) * (2 * radius + 1); }
  void validate() const;
  bool operator==(const DSModel&) const = default;
};

inline constexpr std::size_t kMinCellsPerOffset = 1000;

/// Ridge regression per offset, solved from the regularized normal
/// equations (X'X + lambda I) w = X'y; the bias is regularized as well.
/// InsufficientData below 10^3 samples per offset, SingularSystem when the
/// system is numerically singular (lambda = 0 with a rank-deficient design).
DSModel train_downscaler(const PairSet& pairs, std::size_t radius = 2, double lambda = 1e-3);

/// HR series f times larger in each axis. The LR field is mirror padded at
/// the edges and masked LR cells are filled with the step mean. A TP input
/// yields a signed TP estimate.
GridSeries apply_downscaler(const DSModel& model, const GridSeries& lr);

/// Geometry of the f-times finer grid whose every f-th cell (from the
/// first) coincides with `lr`. Each HR cell inherits its parent's mask.
Geometry refine_geometry(const Geometry& lr, std::size_t factor);

/// Bilinear interpolation baseline on the same cell alignment as
/// `apply_downscaler`; clamps at the last LR row/column.
GridSeries bilinear_upsample(const GridSeries& lr, std::size_t factor);

/// Normal-equation pieces for one offset, exposed for verification:
/// gram = X'X + lambda I and rhs = X'y.
struct RidgeSystem {
  std::size_t dim = 0;
  std::vector<double> gram;  // dim x dim, row-major
  std::vector<std::vector<double>> rhs;  // one per offset
};
RidgeSystem ridge_system(const PairSet& pairs, std::size_t radius, double lambda);

void save_downscaler(const DSModel& model, const std::filesystem::path& path);
DSModel load_downscaler(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_downscaler(const DSModel& model);
DSModel parse_downscaler(std::span<const std::uint8_t> bytes);

struct RouteConfig {
  std::size_t factor = 4;
  LowpassSpec lowpass;
  std::size_t radius = 2;
  double lambda = 1e-3;
  double train_fraction = 0.5;  // leading steps, rounded down to whole days

  void validate() const;
};

/// Both HR reconstructions of the held-out steps:
///   A: TP pairs -> downscaler -> signed TP estimate
///   B: encode -> PP pairs -> downscaler -> decode (TP >= 0)
struct RouteOutputs {
  GridSeries truth;    // held-out HR TP
  GridSeries route_a;
  GridSeries route_b;
  DSModel model_a;
  DSModel model_b;
  std::size_t train_steps = 0;
};

RouteOutputs route_compare(const GridSeries& tp_hr, const GridSeries& vimd_hr, const PPModel& pp_model,
                           const RouteConfig& config);

namespace serial {
DSModel train_downscaler(const PairSet& pairs, std::size_t radius = 2, double lambda = 1e-3);
GridSeries apply_downscaler(const DSModel& model, const GridSeries& lr);
}  // namespace serial

}  // namespace pp
