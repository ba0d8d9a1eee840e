#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pp/error.hpp"
#include "pp/grid.hpp"
#include "pp/netcore.hpp"

namespace pp {

/// Probabilities at which PP quantiles are matched to N(0,1): `n_bins`
/// points uniformly spaced on [p_min, p_max].
struct QuantileSpec {
  std::size_t n_bins = 4000;
  double p_min = 1e-6;
  double p_max = 1.0 - 1e-6;

  std::vector<double> probs() const;
  void validate() const;
};

/// Sorted-sample linear interpolation: for probability p the position is
/// h = p (n - 1) on the ascending sample and the result interpolates between
/// x[floor(h)] and x[floor(h) + 1].
std::vector<double> empirical_quantiles(std::span<const double> sample, std::span<const double> probs);

/// Same rule on an already sorted sample.
double sorted_quantile(std::span<const double> sorted, double p);

/// Mean over bins of (q_pred(p) - Phi^-1(p))^2 with its gradient in batch
/// order. Target quantiles are computed once per instance.
class QuantileLoss {
 public:
  explicit QuantileLoss(const QuantileSpec& spec = {});

  struct Result {
    double loss = 0.0;
    std::vector<double> grad;
  };

  /// BatchTooSmall when the batch has fewer than n_bins / 4 samples.
  Result operator()(std::span<const double> batch) const;
  double loss_only(std::span<const double> batch) const;

  std::span<const double> probs() const noexcept { return probs_; }
  std::span<const double> targets() const noexcept { return targets_; }

 private:
  std::vector<double> probs_;
  std::vector<double> targets_;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean squared error and gradient 2 (pred - true) / n.
LossGrad reconstruction_loss(std::span<const double> pred, std::span<const double> truth);

/// Starting weights for training: Glorot (init_mlp) or fan-in uniform
/// weights and biases (init_mlp_fan_in).
enum class WeightInit { Glorot, FanIn };

/// Options for the blend training run. Weights default to 20 (quantile)
/// and 1 (reconstruction).
struct TrainConfig {
  double w_quant = 20.0;
  double w_rec = 1.0;
  QuantileSpec quantiles;
  std::size_t batch_size = 8192;
  std::size_t epochs = 120;
  double lr = 1e-2;
  double lr_final = 3e-5;
  std::uint64_t seed = 7;
  double holdout_fraction = 0.2;
  std::size_t max_points = 400000;
  std::vector<std::size_t> encoder_widths{2, 64, 64, 1};
  std::vector<std::size_t> decoder_widths{1, 64, 64, 1};
  // w_quant is 0 before epoch quant_warmup_start and ramps linearly to its
  // full value at quant_warmup_end.
  std::size_t quant_warmup_start = 3;
  std::size_t quant_warmup_end = 15;
  // The encoder sees TP' * tp_input_scale during training; the factor is
  // folded into the first-layer weights of the returned model.
  double tp_input_scale = 40.0;
  WeightInit weight_init = WeightInit::FanIn;

  /// w_quant at fractional training progress `epoch` (0-based epochs).
  double quant_weight(double epoch) const noexcept;
  void validate() const;
};

inline constexpr std::size_t kMinTrainingPoints = 100000;

struct TotalLoss {
  double total = 0.0;
  double quant = 0.0;
  double rec = 0.0;
  std::vector<double> grad_pp;    // w_quant * d(L_quant)/d(pp)
  std::vector<double> grad_pred;  // w_rec * d(L_rec)/d(pred)
};

inline double combine_losses(double l_quant, double l_rec, const TrainConfig& config) noexcept {
  return config.w_quant * l_quant + config.w_rec * l_rec;
}

TotalLoss total_loss(std::span<const double> pp_batch, std::span<const double> tp_pred,
                     std::span<const double> tp_true, const TrainConfig& config, const QuantileLoss& quantile);

struct EpochRecord {
  std::size_t epoch = 0;
  double l_quant = 0.0;
  double l_rec = 0.0;
  double l_total = 0.0;
  double mae = 0.0;  // clamped decode, normalized TP' units
  double ks = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool operator==(const TrainHistory&) const = default;
};

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

struct TrainResult {
  PPModel model;  // best epoch by holdout total loss
  TrainHistory history;
};

/// Raised when a training loss turns non-finite; carries the best model
/// seen before the failure.
class TrainDiverged : public Error {
 public:
  TrainDiverged(const std::string& detail, TrainResult partial)
      : Error(Errc::NonFiniteLoss, detail), partial_(std::move(partial)) {}
  const TrainResult& partial() const noexcept { return partial_; }

 private:
  TrainResult partial_;
};

/// Optional per-epoch callback for progress logging.
using EpochObserver = std::function<void(const EpochRecord&)>;

TrainResult train_pp(const GridSeries& tp, const GridSeries& vimd, const TrainConfig& config,
                     const EpochObserver& observer = {});

/// Point-wise model application on normalized inputs.
std::vector<double> encode_points(const PPModel& model, std::span<const double> tp_norm,
                                  std::span<const double> vimd_norm, Exec exec = Exec::Parallel);
/// Raw decoder output in TP' units (no clamp).
std::vector<double> decode_points(const PPModel& model, std::span<const double> pp, Exec exec = Exec::Parallel);

double normalize_tp(const Normalization& n, double tp) noexcept;
double normalize_vimd(const Normalization& n, double vimd) noexcept;
/// TP = s (exp(TP') - 1), clamped at zero.
double denormalize_tp(const Normalization& n, double tp_norm) noexcept;

/// Encoder over aligned TP and VIMD series; masked cells stay masked.
GridSeries encode(const PPModel& model, const GridSeries& tp, const GridSeries& vimd);

/// Decoder back to TP (mm), clamped at zero. KindMismatch when `pp` is not
/// a PP field.
GridSeries decode(const PPModel& model, const GridSeries& pp);

}  // namespace pp
