#include "pp/blend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "pp/normal.hpp"

namespace pp {

namespace {

constexpr std::size_t kApplyChunk = 16384;

void require(bool ok, Errc code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

std::vector<std::size_t> ascending_order(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  return order;
}

double cosine_lr(double lr0, double lr1, std::size_t step, std::size_t total) {
  if (total <= 1) return lr0;
  const double t = static_cast<double>(step) / static_cast<double>(total - 1);
  return lr1 + 0.5 * (lr0 - lr1) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace

std::vector<double> QuantileSpec::probs() const {
  validate();
  std::vector<double> p(n_bins);
  if (n_bins == 1) {
    p[0] = 0.5 * (p_min + p_max);
    return p;
  }
  const double step = (p_max - p_min) / static_cast<double>(n_bins - 1);
  for (std::size_t i = 0; i < n_bins; ++i) p[i] = p_min + step * static_cast<double>(i);
  p.back() = p_max;
  return p;
}

void QuantileSpec::validate() const {
  require(n_bins >= 1, Errc::BadConfig, "quantile spec needs at least one bin");
  require(p_min > 0.0 && p_max < 1.0 && p_min < p_max, Errc::BadProb, "quantile probabilities must satisfy 0 < p_min < p_max < 1");
  require(n_bins > 1 || p_min <= p_max, Errc::BadConfig, "invalid bin range");
}

double sorted_quantile(std::span<const double> sorted, double p) {
  require(sorted.size() >= 2, Errc::EmptySample, "quantiles need at least two samples");
  require(p >= 0.0 && p <= 1.0, Errc::BadProb, "probability " + std::to_string(p) + " outside [0,1]");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::vector<double> empirical_quantiles(std::span<const double> sample, std::span<const double> probs) {
  require(sample.size() >= 2, Errc::EmptySample, "quantiles need at least two samples");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(probs.size());
  for (double p : probs) out.push_back(sorted_quantile(sorted, p));
  return out;
}

QuantileLoss::QuantileLoss(const QuantileSpec& spec) : probs_(spec.probs()) {
  targets_.reserve(probs_.size());
  for (double p : probs_) targets_.push_back(normal_quantile(p));
}

QuantileLoss::Result QuantileLoss::operator()(std::span<const double> batch) const {
  const std::size_t n = batch.size();
  require(n >= 2 && n >= probs_.size() / 4, Errc::BatchTooSmall,
          "batch of " + std::to_string(n) + " is below n_bins/4 = " + std::to_string(probs_.size() / 4));
  const auto order = ascending_order(batch);
  Result r;
  r.grad.assign(n, 0.0);
  const double scale = 2.0 / static_cast<double>(probs_.size());
  for (std::size_t k = 0; k < probs_.size(); ++k) {
    const double h = probs_[k] * static_cast<double>(n - 1);
    const auto lo = std::min(static_cast<std::size_t>(std::floor(h)), n - 1);
    const double frac = lo + 1 < n ? h - static_cast<double>(lo) : 0.0;
    const double xlo = batch[order[lo]];
    const double xhi = lo + 1 < n ? batch[order[lo + 1]] : xlo;
    const double resid = xlo + frac * (xhi - xlo) - targets_[k];
    r.loss += resid * resid;
    const double dq = scale * resid;
    if (frac == 0.0 || xlo == xhi) {
      // Boundary or tie: the whole subgradient goes to the lower index.
      r.grad[order[lo]] += dq;
    } else {
      r.grad[order[lo]] += dq * (1.0 - frac);
      r.grad[order[lo + 1]] += dq * frac;
    }
  }
  r.loss /= static_cast<double>(probs_.size());
  return r;
}

double QuantileLoss::loss_only(std::span<const double> batch) const {
  require(batch.size() >= 2 && batch.size() >= probs_.size() / 4, Errc::BatchTooSmall,
          "batch of " + std::to_string(batch.size()) + " is below n_bins/4");
  std::vector<double> sorted(batch.begin(), batch.end());
  std::sort(sorted.begin(), sorted.end());
  double loss = 0.0;
  for (std::size_t k = 0; k < probs_.size(); ++k) {
    const double resid = sorted_quantile(sorted, probs_[k]) - targets_[k];
    loss += resid * resid;
  }
  return loss / static_cast<double>(probs_.size());
}

LossGrad reconstruction_loss(std::span<const double> pred, std::span<const double> truth) {
  require(pred.size() == truth.size(), Errc::ShapeMismatch, "prediction and target lengths differ");
  require(!pred.empty(), Errc::EmptySample, "empty reconstruction batch");
  LossGrad r;
  r.grad.resize(pred.size());
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    r.loss += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.loss /= n;
  return r;
}

TotalLoss total_loss(std::span<const double> pp_batch, std::span<const double> tp_pred,
                     std::span<const double> tp_true, const TrainConfig& config, const QuantileLoss& quantile) {
  auto q = quantile(pp_batch);
  auto rec = reconstruction_loss(tp_pred, tp_true);
  TotalLoss t;
  t.quant = q.loss;
  t.rec = rec.loss;
  t.total = combine_losses(q.loss, rec.loss, config);
  t.grad_pp = std::move(q.grad);
  for (auto& g : t.grad_pp) g *= config.w_quant;
  t.grad_pred = std::move(rec.grad);
  for (auto& g : t.grad_pred) g *= config.w_rec;
  return t;
}

void TrainConfig::validate() const {
  require(w_quant >= 0.0 && w_rec >= 0.0, Errc::BadConfig, "loss weights must be non-negative");
  quantiles.validate();
  require(batch_size >= 4096, Errc::BadConfig, "batch_size must be at least 4096");
  require(batch_size >= quantiles.n_bins / 4, Errc::BadConfig, "batch_size below n_bins/4");
  require(epochs >= 1, Errc::BadConfig, "epochs must be positive");
  require(lr > 0.0 && lr_final > 0.0 && lr_final <= lr, Errc::BadConfig, "need 0 < lr_final <= lr");
  require(holdout_fraction > 0.0 && holdout_fraction < 1.0, Errc::BadConfig, "holdout_fraction must lie in (0,1)");
  require(encoder_widths.size() >= 2 && encoder_widths.front() == 2 && encoder_widths.back() == 1, Errc::BadWidths,
          "encoder widths must start at 2 and end at 1");
  require(quant_warmup_start <= quant_warmup_end, Errc::BadConfig, "quant warm-up must end after it starts");
  require(std::isfinite(tp_input_scale) && tp_input_scale > 0.0, Errc::BadConfig, "tp_input_scale must be positive");
  require(decoder_widths.size() >= 2 && decoder_widths.front() == 1 && decoder_widths.back() == 1, Errc::BadWidths,
          "decoder widths must start at 1 and end at 1");
}

double TrainConfig::quant_weight(double epoch) const noexcept {
  const auto start = static_cast<double>(quant_warmup_start);
  const auto end = static_cast<double>(quant_warmup_end);
  if (epoch >= end) return w_quant;
  if (epoch <= start) return 0.0;
  return w_quant * (epoch - start) / (end - start);
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::IoFailure, "cannot open " + path.string());
  out << "epoch,l_quant,l_rec,l_total,mae,ks\n" << std::setprecision(17);
  for (const auto& e : history.epochs)
    out << e.epoch << ',' << e.l_quant << ',' << e.l_rec << ',' << e.l_total << ',' << e.mae << ',' << e.ks << '\n';
  require(static_cast<bool>(out), Errc::IoFailure, "write failed for " + path.string());
}

double normalize_tp(const Normalization& n, double tp) noexcept { return std::log1p(tp / n.tp_scale); }

double normalize_vimd(const Normalization& n, double vimd) noexcept { return (vimd - n.vimd_mean) / n.vimd_std; }

double denormalize_tp(const Normalization& n, double tp_norm) noexcept {
  const double tp = n.tp_scale * std::expm1(tp_norm);
  return std::clamp(std::isnan(tp) ? 0.0 : tp, 0.0, static_cast<double>(std::numeric_limits<float>::max()));
}

std::vector<double> encode_points(const PPModel& model, std::span<const double> tp_norm,
                                  std::span<const double> vimd_norm, Exec exec) {
  require(tp_norm.size() == vimd_norm.size(), Errc::ShapeMismatch, "TP and VIMD point counts differ");
  std::vector<double> out(tp_norm.size());
  for (std::size_t start = 0; start < tp_norm.size(); start += kApplyChunk) {
    const std::size_t count = std::min(kApplyChunk, tp_norm.size() - start);
    Matrix in(2, count);
    std::copy_n(tp_norm.begin() + static_cast<std::ptrdiff_t>(start), count, in.row(0));
    std::copy_n(vimd_norm.begin() + static_cast<std::ptrdiff_t>(start), count, in.row(1));
    auto cache = forward(model.encoder, std::move(in), exec);
    std::copy_n(cache.result().row(0), count, out.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return out;
}

std::vector<double> decode_points(const PPModel& model, std::span<const double> pp, Exec exec) {
  std::vector<double> out(pp.size());
  for (std::size_t start = 0; start < pp.size(); start += kApplyChunk) {
    const std::size_t count = std::min(kApplyChunk, pp.size() - start);
    Matrix in(1, count);
    std::copy_n(pp.begin() + static_cast<std::ptrdiff_t>(start), count, in.row(0));
    auto cache = forward(model.decoder, std::move(in), exec);
    std::copy_n(cache.result().row(0), count, out.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return out;
}

namespace {

struct PointPool {
  std::vector<double> tp;    // raw
  std::vector<double> vimd;  // raw
};

PointPool gather_points(const GridSeries& tp, const GridSeries& vimd, const TrainConfig& config) {
  require(tp.kind() == FieldKind::TP && vimd.kind() == FieldKind::VIMD, Errc::KindMismatch,
          "train_pp needs a TP series and a VIMD series");
  require(tp.aligned_with(vimd), Errc::GeometryMismatch, "TP and VIMD series are not aligned");
  const auto& g = tp.geometry();
  std::size_t valid_cells = 0;
  for (std::size_t c = 0; c < g.cells(); ++c) valid_cells += g.valid(c) ? 1 : 0;
  const std::size_t total = valid_cells * tp.size();
  require(total >= kMinTrainingPoints, Errc::InsufficientData,
          std::to_string(total) + " valid points, need at least " + std::to_string(kMinTrainingPoints));

  // Uniform subsample without replacement (selection sampling keeps the
  // pool in storage order, so the result depends only on the seed).
  std::mt19937_64 rng(config.seed ^ 0x5eed5eedULL);
  const std::size_t want = std::min(config.max_points, total);
  PointPool pool;
  pool.tp.reserve(want);
  pool.vimd.reserve(want);
  std::size_t seen = 0;
  for (std::size_t s = 0; s < tp.size() && pool.tp.size() < want; ++s) {
    auto ts = tp.step(s);
    auto vs = vimd.step(s);
    for (std::size_t c = 0; c < g.cells() && pool.tp.size() < want; ++c) {
      if (!g.valid(c)) continue;
      const std::size_t left = total - seen;
      const std::size_t need = want - pool.tp.size();
      ++seen;
      if (std::uniform_int_distribution<std::size_t>(0, left - 1)(rng) < need) {
        pool.tp.push_back(ts[c]);
        pool.vimd.push_back(vs[c]);
      }
    }
  }
  return pool;
}

struct Split {
  std::vector<double> tp_norm;
  std::vector<double> vimd_norm;
};

Split normalize(const PointPool& pool, std::span<const std::size_t> idx, const Normalization& n) {
  Split s;
  s.tp_norm.reserve(idx.size());
  s.vimd_norm.reserve(idx.size());
  for (auto i : idx) {
    s.tp_norm.push_back(normalize_tp(n, pool.tp[i]));
    s.vimd_norm.push_back(normalize_vimd(n, pool.vimd[i]));
  }
  return s;
}

EpochRecord evaluate_holdout(const PPModel& model, const Split& holdout, const TrainConfig& config,
                             const QuantileLoss& quantile) {
  auto pp = encode_points(model, holdout.tp_norm, holdout.vimd_norm);
  auto pred = decode_points(model, pp);
  EpochRecord r;
  r.l_quant = quantile.loss_only(pp);
  r.l_rec = reconstruction_loss(pred, holdout.tp_norm).loss;
  r.l_total = combine_losses(r.l_quant, r.l_rec, config);
  double abs_err = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) abs_err += std::abs(std::max(pred[i], 0.0) - holdout.tp_norm[i]);
  r.mae = abs_err / static_cast<double>(pred.size());
  r.ks = ks_statistic_normal(pp);
  return r;
}

// Model taking unscaled TP' from one trained on TP' * scale.
PPModel fold_input_scale(PPModel model, double scale) {
  auto& w = model.encoder.layers.front().weights;
  for (std::size_t r = 0; r < w.rows(); ++r) w(r, 0) *= scale;
  return model;
}

bool all_finite(const std::vector<std::span<double>>& blocks) {
  for (auto b : blocks)
    for (double v : b)
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TrainResult train_pp(const GridSeries& tp, const GridSeries& vimd, const TrainConfig& config,
                     const EpochObserver& observer) {
  config.validate();
  PointPool pool = gather_points(tp, vimd, config);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> idx(pool.tp.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_hold = static_cast<std::size_t>(std::llround(config.holdout_fraction * static_cast<double>(idx.size())));
  std::span<const std::size_t> hold_idx(idx.data(), n_hold);
  std::span<const std::size_t> train_idx(idx.data() + n_hold, idx.size() - n_hold);
  require(train_idx.size() >= config.batch_size && hold_idx.size() >= config.quantiles.n_bins / 4,
          Errc::InsufficientData, "not enough points for one batch and a holdout split");

  // Normalization is fitted on the training split only.
  Normalization norm;
  {
    double wet_sum = 0.0, v_sum = 0.0, v_sq = 0.0;
    std::size_t wet = 0;
    for (auto i : train_idx) {
      if (pool.tp[i] > 0.0) {
        wet_sum += pool.tp[i];
        ++wet;
      }
      v_sum += pool.vimd[i];
    }
    const double n = static_cast<double>(train_idx.size());
    const double v_mean = v_sum / n;
    for (auto i : train_idx) v_sq += (pool.vimd[i] - v_mean) * (pool.vimd[i] - v_mean);
    require(wet > 0, Errc::InsufficientData, "training split has no positive TP");
    norm.tp_scale = wet_sum / static_cast<double>(wet);
    norm.vimd_mean = v_mean;
    norm.vimd_std = std::sqrt(v_sq / n);
    require(norm.vimd_std > 0.0, Errc::InsufficientData, "VIMD has zero variance");
  }
  const Split train = normalize(pool, train_idx, norm);
  const Split holdout = normalize(pool, hold_idx, norm);

  auto init = [&](const std::vector<std::size_t>& widths, std::uint64_t seed) {
    return config.weight_init == WeightInit::FanIn ? init_mlp_fan_in(widths, seed) : init_mlp(widths, seed);
  };
  PPModel model{init(config.encoder_widths, config.seed * 2 + 1), init(config.decoder_widths, config.seed * 2 + 2),
                norm};
  auto blocks = model.encoder.parameter_blocks();
  for (auto b : model.decoder.parameter_blocks()) blocks.push_back(b);
  AdamState adam = AdamState::for_blocks(blocks, config.lr);
  const QuantileLoss quantile(config.quantiles);

  const std::size_t B = config.batch_size;
  const std::size_t steps_per_epoch = train.tp_norm.size() / B;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  std::vector<std::size_t> order(train.tp_norm.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const double in_scale = config.tp_input_scale;
  TrainResult best{fold_input_scale(model, in_scale), {}};
  double best_total = std::numeric_limits<double>::infinity();
  TrainHistory history;
  std::size_t step = 0;

  TrainConfig step_config = config;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < steps_per_epoch; ++k, ++step) {
      step_config.w_quant = config.quant_weight(static_cast<double>(epoch) + static_cast<double>(k * B) /
                                                                                static_cast<double>(order.size()));
      Matrix in(2, B);
      std::vector<double> truth(B);
      for (std::size_t j = 0; j < B; ++j) {
        const std::size_t i = order[k * B + j];
        in(0, j) = in_scale * train.tp_norm[i];
        in(1, j) = train.vimd_norm[i];
        truth[j] = train.tp_norm[i];
      }
      auto enc = forward(model.encoder, std::move(in));
      const Matrix& pp = enc.result();
      auto dec = forward(model.decoder, pp);
      const Matrix& pred = dec.result();
      auto loss = total_loss(pp.flat(), pred.flat(), truth, step_config, quantile);
      if (!std::isfinite(loss.total)) {
        best.history = history;
        throw TrainDiverged("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(k),
                            std::move(best));
      }

      Matrix dpred(1, B);
      std::copy(loss.grad_pred.begin(), loss.grad_pred.end(), dpred.row(0));
      auto gdec = backward(model.decoder, dec, std::move(dpred));
      Matrix dpp = std::move(gdec.input);
      for (std::size_t j = 0; j < B; ++j) dpp(0, j) += loss.grad_pp[j];
      auto genc = backward(model.encoder, enc, std::move(dpp));

      auto grads = genc.blocks();
      for (auto g : gdec.blocks()) grads.push_back(g);
      adam.lr = cosine_lr(config.lr, config.lr_final, step, total_steps);
      adam_step(blocks, grads, adam);
    }
    if (!all_finite(blocks)) {
      best.history = history;
      throw TrainDiverged("non-finite parameters after epoch " + std::to_string(epoch), std::move(best));
    }

    PPModel folded = fold_input_scale(model, in_scale);
    EpochRecord rec = evaluate_holdout(folded, holdout, config, quantile);
    rec.epoch = epoch + 1;
    if (!std::isfinite(rec.l_total)) {
      best.history = history;
      throw TrainDiverged("non-finite holdout loss at epoch " + std::to_string(epoch + 1), std::move(best));
    }
    history.epochs.push_back(rec);
    if (observer) observer(rec);
    if (rec.l_total < best_total) {
      best_total = rec.l_total;
      best.model = std::move(folded);
      history.best_epoch = rec.epoch;
    }
  }
  best.history = std::move(history);
  return best;
}

GridSeries encode(const PPModel& model, const GridSeries& tp, const GridSeries& vimd) {
  require(tp.kind() == FieldKind::TP, Errc::KindMismatch, "encode expects a TP series first");
  require(vimd.kind() == FieldKind::VIMD, Errc::KindMismatch, "encode expects a VIMD series second");
  require(tp.aligned_with(vimd), Errc::GeometryMismatch, "TP and VIMD geometry or timestamps differ");
  const auto& g = tp.geometry();
  std::vector<std::vector<float>> out(tp.size());
  std::vector<double> tn, vn;
  std::vector<std::size_t> cells;
  for (std::size_t c = 0; c < g.cells(); ++c)
    if (g.valid(c)) cells.push_back(c);
  for (std::size_t s = 0; s < tp.size(); ++s) {
    auto ts = tp.step(s);
    auto vs = vimd.step(s);
    tn.clear();
    vn.clear();
    for (auto c : cells) {
      tn.push_back(normalize_tp(model.norm, ts[c]));
      vn.push_back(normalize_vimd(model.norm, vs[c]));
    }
    auto pp = encode_points(model, tn, vn);
    out[s].assign(g.cells(), 0.0f);
    for (std::size_t k = 0; k < cells.size(); ++k) out[s][cells[k]] = static_cast<float>(pp[k]);
  }
  return GridSeries(g.with_kind(FieldKind::PP), tp.t0(), std::move(out));
}

GridSeries decode(const PPModel& model, const GridSeries& pp) {
  require(pp.kind() == FieldKind::PP, Errc::KindMismatch,
          std::string("decode expects a PP series, got ") + std::string(kind_name(pp.kind())));
  const auto& g = pp.geometry();
  std::vector<std::size_t> cells;
  for (std::size_t c = 0; c < g.cells(); ++c)
    if (g.valid(c)) cells.push_back(c);
  std::vector<std::vector<float>> out(pp.size());
  std::vector<double> in;
  for (std::size_t s = 0; s < pp.size(); ++s) {
    auto ps = pp.step(s);
    in.clear();
    for (auto c : cells) in.push_back(ps[c]);
    auto tpn = decode_points(model, in);
    out[s].assign(g.cells(), 0.0f);
    for (std::size_t k = 0; k < cells.size(); ++k)
      out[s][cells[k]] = static_cast<float>(denormalize_tp(model.norm, tpn[k]));
  }
  return GridSeries(g.with_kind(FieldKind::TP), pp.t0(), std::move(out));
}

}  // namespace pp
