#include "pp/downscale.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

#include <Eigen/Dense>

#include "pp/blend.hpp"
#include "pp/bytes.hpp"
#include "pp/error.hpp"

namespace pp {

namespace {

constexpr std::string_view kMagic = "PPD1";

void require(bool ok, Errc code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

std::size_t mirror(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t k = i % period;
  if (k < 0) k += period;
  return k < static_cast<std::ptrdiff_t>(n) ? static_cast<std::size_t>(k)
                                             : static_cast<std::size_t>(period - 1 - k);
}

// Masked cells take the mean of the valid cells of the same step.
std::vector<double> filled(const Geometry& g, std::span<const float> src) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < src.size(); ++c) {
    if (g.valid(c)) {
      sum += src[c];
      ++n;
    }
  }
  const double fill = n > 0 ? sum / static_cast<double>(n) : 0.0;
  std::vector<double> out(src.size());
  for (std::size_t c = 0; c < src.size(); ++c) out[c] = g.valid(c) ? static_cast<double>(src[c]) : fill;
  return out;
}

// Patch around (i, j) followed by a constant 1 for the bias.
void extract_patch(const std::vector<double>& field, std::size_t rows, std::size_t cols, std::size_t i,
                   std::size_t j, std::size_t radius, double* out) {
  const auto r = static_cast<std::ptrdiff_t>(radius);
  std::size_t k = 0;
  for (std::ptrdiff_t di = -r; di <= r; ++di) {
    const std::size_t ii = mirror(static_cast<std::ptrdiff_t>(i) + di, rows);
    for (std::ptrdiff_t dj = -r; dj <= r; ++dj)
      out[k++] = field[ii * cols + mirror(static_cast<std::ptrdiff_t>(j) + dj, cols)];
  }
  out[k] = 1.0;
}

void check_pairs(const PairSet& pairs) {
  const std::size_t f = pairs.factor;
  require(f >= 1, Errc::BadFactor, "factor must be positive");
  require(pairs.hr.size() == pairs.lr.size() && pairs.hr.t0() == pairs.lr.t0(), Errc::GeometryMismatch,
          "HR and LR series have different timestamps");
  require(pairs.hr.nlat() == pairs.lr.nlat() * f && pairs.hr.nlon() == pairs.lr.nlon() * f,
          Errc::GeometryMismatch, "HR grid is not the LR grid refined by the factor");
}

struct OffsetSystem {
  std::vector<double> gram;  // upper triangle filled, dim x dim
  std::vector<double> rhs;
  std::size_t samples = 0;
};

// Normal equations of offset `o`; samples are accumulated in (step, row,
// column) order so the result does not depend on scheduling.
OffsetSystem offset_system(const PairSet& pairs, const std::vector<std::vector<double>>& lr_filled,
                           std::size_t radius, std::size_t o) {
  const std::size_t f = pairs.factor;
  const std::size_t a = o / f, b = o % f;
  const std::size_t rows = pairs.lr.nlat(), cols = pairs.lr.nlon();
  const std::size_t hr_cols = pairs.hr.nlon();
  const auto& hg = pairs.hr.geometry();
  const std::size_t dim = (2 * radius + 1) * (2 * radius + 1) + 1;
  OffsetSystem sys{std::vector<double>(dim * dim, 0.0), std::vector<double>(dim, 0.0), 0};
  std::vector<double> x(dim);
  for (std::size_t s = 0; s < pairs.hr.size(); ++s) {
    auto hr = pairs.hr.step(s);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t cell = (i * f + a) * hr_cols + j * f + b;
        if (!hg.valid(cell)) continue;
        extract_patch(lr_filled[s], rows, cols, i, j, radius, x.data());
        const double y = hr[cell];
        for (std::size_t p = 0; p < dim; ++p) {
          const double xp = x[p];
          double* g = sys.gram.data() + p * dim;
          for (std::size_t q = p; q < dim; ++q) g[q] += xp * x[q];
          sys.rhs[p] += xp * y;
        }
        ++sys.samples;
      }
    }
  }
  for (std::size_t p = 0; p < dim; ++p)
    for (std::size_t q = 0; q < p; ++q) sys.gram[p * dim + q] = sys.gram[q * dim + p];
  return sys;
}

std::vector<double> solve_ridge(const OffsetSystem& sys, std::size_t dim, double lambda, std::size_t o) {
  Eigen::MatrixXd A(dim, dim);
  Eigen::VectorXd rhs(dim);
  for (std::size_t p = 0; p < dim; ++p) {
    rhs(static_cast<Eigen::Index>(p)) = sys.rhs[p];
    for (std::size_t q = 0; q < dim; ++q)
      A(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = sys.gram[p * dim + q] + (p == q ? lambda : 0.0);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-13))
    throw Error(Errc::SingularSystem, "normal equations of offset " + std::to_string(o) + " are singular (lambda " +
                                          std::to_string(lambda) + ")");
  Eigen::VectorXd w = ldlt.solve(rhs);
  // One step of iterative refinement.
  w += ldlt.solve(rhs - A * w);
  return {w.data(), w.data() + w.size()};
}

template <bool Parallel>
DSModel train_impl(const PairSet& pairs, std::size_t radius, double lambda) {
  check_pairs(pairs);
  require(lambda >= 0.0 && std::isfinite(lambda), Errc::BadConfig, "lambda must be finite and non-negative");
  require(radius <= 16, Errc::BadConfig, "patch radius above 16");
  const std::size_t f = pairs.factor;
  const std::size_t per_offset = pairs.lr.cells() * pairs.lr.size();
  require(per_offset >= kMinCellsPerOffset, Errc::InsufficientData,
          std::to_string(per_offset) + " samples per offset, need at least " + std::to_string(kMinCellsPerOffset));

  std::vector<std::vector<double>> lr_filled(pairs.lr.size());
  for (std::size_t s = 0; s < pairs.lr.size(); ++s) lr_filled[s] = filled(pairs.lr.geometry(), pairs.lr.step(s));

  DSModel model;
  model.factor = f;
  model.radius = radius;
  model.lambda = lambda;
  model.coeffs.resize(f * f);
  const std::size_t dim = model.patch_size() + 1;
  const auto n_off = static_cast<std::ptrdiff_t>(f * f);

  auto fit = [&](std::size_t o) {
    const OffsetSystem sys = offset_system(pairs, lr_filled, radius, o);
    require(sys.samples >= kMinCellsPerOffset, Errc::InsufficientData,
            "offset " + std::to_string(o) + " has " + std::to_string(sys.samples) + " valid samples");
    model.coeffs[o] = solve_ridge(sys, dim, lambda, o);
  };

  if constexpr (Parallel) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t o = 0; o < n_off; ++o) {
      try {
        fit(static_cast<std::size_t>(o));
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::ptrdiff_t o = 0; o < n_off; ++o) fit(static_cast<std::size_t>(o));
  }
  return model;
}

void check_lr(const GridSeries& lr) {
  require(lr.nlat() >= 2 && lr.nlon() >= 2, Errc::GeometryMismatch, "LR grid needs at least 2x2 cells");
}

std::vector<float> downscale_step(const DSModel& model, const Geometry& lg, std::span<const float> src) {
  const std::size_t f = model.factor;
  const std::size_t rows = lg.nlat(), cols = lg.nlon();
  const std::size_t hr_cols = cols * f;
  const std::size_t dim = model.patch_size() + 1;
  const auto field = filled(lg, src);
  std::vector<float> out(rows * f * hr_cols, 0.0f);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      extract_patch(field, rows, cols, i, j, model.radius, x.data());
      for (std::size_t a = 0; a < f; ++a) {
        for (std::size_t b = 0; b < f; ++b) {
          const auto& w = model.coeffs[a * f + b];
          double acc = 0.0;
          for (std::size_t p = 0; p < dim; ++p) acc += w[p] * x[p];
          out[(i * f + a) * hr_cols + j * f + b] = static_cast<float>(acc);
        }
      }
    }
  }
  if (!lg.mask.empty()) {
    for (std::size_t c = 0; c < out.size(); ++c) {
      const std::size_t parent = (c / hr_cols / f) * cols + (c % hr_cols) / f;
      if (!lg.valid(parent)) out[c] = 0.0f;
    }
  }
  return out;
}

GridSeries make_output(const GridSeries& lr, std::size_t factor, std::vector<std::vector<float>> steps) {
  Geometry hg = refine_geometry(lr.geometry(), factor);
  if (hg.kind == FieldKind::TP) return GridSeries::signed_estimate(std::move(hg), lr.t0(), std::move(steps));
  return GridSeries(std::move(hg), lr.t0(), std::move(steps));
}

template <bool Parallel>
GridSeries apply_impl(const DSModel& model, const GridSeries& lr) {
  model.validate();
  check_lr(lr);
  std::vector<std::vector<float>> out(lr.size());
  const auto n = static_cast<std::ptrdiff_t>(lr.size());
  if constexpr (Parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t s = 0; s < n; ++s)
      out[static_cast<std::size_t>(s)] = downscale_step(model, lr.geometry(), lr.step(static_cast<std::size_t>(s)));
  } else {
    for (std::ptrdiff_t s = 0; s < n; ++s)
      out[static_cast<std::size_t>(s)] = downscale_step(model, lr.geometry(), lr.step(static_cast<std::size_t>(s)));
  }
  return make_output(lr, model.factor, std::move(out));
}

// The refined grid recomputes coordinates from the LR axes; snap it back
// onto the HR geometry it was derived from.
GridSeries on_geometry(const GridSeries& s, const Geometry& target) {
  const auto& g = s.geometry();
  bool close = g.nlat() == target.nlat() && g.nlon() == target.nlon();
  for (std::size_t i = 0; close && i < g.nlat(); ++i) close = std::abs(g.lat[i] - target.lat[i]) < 1e-9;
  for (std::size_t j = 0; close && j < g.nlon(); ++j) close = std::abs(g.lon[j] - target.lon[j]) < 1e-9;
  require(close, Errc::GeometryMismatch, "downscaled grid does not match the HR grid");
  auto geometry = std::make_shared<const Geometry>(target.with_kind(g.kind));
  if (s.has_negative_tp()) return GridSeries::signed_estimate(geometry, s.t0(), s.steps());
  return GridSeries(geometry, s.t0(), s.steps());
}

}  // namespace

void DSModel::validate() const {
  require(factor >= 1, Errc::BadFactor, "factor must be positive");
  require(coeffs.size() == factor * factor, Errc::ShapeMismatch, "expected factor^2 coefficient vectors");
  for (const auto& c : coeffs)
    require(c.size() == patch_size() + 1, Errc::ShapeMismatch, "coefficient vector has the wrong length");
}

Geometry refine_geometry(const Geometry& lr, std::size_t factor) {
  require(factor >= 1, Errc::BadFactor, "factor must be positive");
  require(lr.nlat() >= 2 && lr.nlon() >= 2, Errc::GeometryMismatch, "LR grid needs at least 2x2 cells");
  Geometry hg;
  hg.kind = lr.kind;
  const double f = static_cast<double>(factor);
  const double dlat = lr.lat[1] - lr.lat[0];
  const double dlon = lr.lon[1] - lr.lon[0];
  for (std::size_t i = 0; i < lr.nlat(); ++i)
    for (std::size_t a = 0; a < factor; ++a) hg.lat.push_back(lr.lat[i] + static_cast<double>(a) * dlat / f);
  for (std::size_t j = 0; j < lr.nlon(); ++j)
    for (std::size_t b = 0; b < factor; ++b) hg.lon.push_back(lr.lon[j] + static_cast<double>(b) * dlon / f);
  const std::size_t hr_cols = hg.nlon();
  hg.mask.resize(hg.nlat() * hr_cols);
  for (std::size_t c = 0; c < hg.mask.size(); ++c)
    hg.mask[c] = lr.mask[(c / hr_cols / factor) * lr.nlon() + (c % hr_cols) / factor];
  return hg;
}

DSModel train_downscaler(const PairSet& pairs, std::size_t radius, double lambda) {
  return train_impl<true>(pairs, radius, lambda);
}

GridSeries apply_downscaler(const DSModel& model, const GridSeries& lr) { return apply_impl<true>(model, lr); }

namespace serial {
DSModel train_downscaler(const PairSet& pairs, std::size_t radius, double lambda) {
  return train_impl<false>(pairs, radius, lambda);
}
GridSeries apply_downscaler(const DSModel& model, const GridSeries& lr) { return apply_impl<false>(model, lr); }
}  // namespace serial

RidgeSystem ridge_system(const PairSet& pairs, std::size_t radius, double lambda) {
  check_pairs(pairs);
  std::vector<std::vector<double>> lr_filled(pairs.lr.size());
  for (std::size_t s = 0; s < pairs.lr.size(); ++s) lr_filled[s] = filled(pairs.lr.geometry(), pairs.lr.step(s));
  RidgeSystem out;
  out.dim = (2 * radius + 1) * (2 * radius + 1) + 1;
  for (std::size_t o = 0; o < pairs.factor * pairs.factor; ++o) {
    OffsetSystem sys = offset_system(pairs, lr_filled, radius, o);
    if (o == 0) {
      out.gram = sys.gram;
      for (std::size_t p = 0; p < out.dim; ++p) out.gram[p * out.dim + p] += lambda;
    }
    out.rhs.push_back(std::move(sys.rhs));
  }
  return out;
}

GridSeries bilinear_upsample(const GridSeries& lr, std::size_t factor) {
  require(factor >= 1, Errc::BadFactor, "factor must be positive");
  check_lr(lr);
  const auto& lg = lr.geometry();
  const std::size_t rows = lg.nlat(), cols = lg.nlon();
  const std::size_t hr_rows = rows * factor, hr_cols = cols * factor;
  const double f = static_cast<double>(factor);
  std::vector<std::vector<float>> out(lr.size());
  for (std::size_t s = 0; s < lr.size(); ++s) {
    const auto field = filled(lg, lr.step(s));
    auto& dst = out[s];
    dst.resize(hr_rows * hr_cols);
    for (std::size_t i = 0; i < hr_rows; ++i) {
      const std::size_t i0 = i / factor;
      const std::size_t i1 = std::min(i0 + 1, rows - 1);
      const double ty = static_cast<double>(i % factor) / f;
      for (std::size_t j = 0; j < hr_cols; ++j) {
        const std::size_t j0 = j / factor;
        const std::size_t j1 = std::min(j0 + 1, cols - 1);
        const double tx = static_cast<double>(j % factor) / f;
        const double top = (1.0 - tx) * field[i0 * cols + j0] + tx * field[i0 * cols + j1];
        const double bottom = (1.0 - tx) * field[i1 * cols + j0] + tx * field[i1 * cols + j1];
        dst[i * hr_cols + j] = static_cast<float>((1.0 - ty) * top + ty * bottom);
      }
    }
  }
  return make_output(lr, factor, std::move(out));
}

std::vector<std::uint8_t> serialize_downscaler(const DSModel& model) {
  model.validate();
  ByteWriter w;
  w.magic(kMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.factor));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.radius));
  w.put<double>(model.lambda);
  for (const auto& c : model.coeffs) w.put_all<double>(c);
  return std::move(w.bytes());
}

DSModel parse_downscaler(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, Errc::MalformedCheckpoint);
  if (!r.magic(kMagic)) throw Error(Errc::VersionMismatch, "checkpoint magic is not PPD1");
  DSModel m;
  m.factor = r.get<std::uint32_t>("factor");
  m.radius = r.get<std::uint32_t>("radius");
  m.lambda = r.get<double>("lambda");
  require(m.factor >= 1 && m.factor <= 64 && m.radius <= 16, Errc::MalformedCheckpoint,
          "implausible factor or radius in downscaler header");
  m.coeffs.assign(m.factor * m.factor, std::vector<double>(m.patch_size() + 1));
  for (auto& c : m.coeffs) r.get_all<double>(c, "coefficients");
  require(r.remaining() == 0, Errc::MalformedCheckpoint, "trailing bytes at offset " + std::to_string(r.offset()));
  return m;
}

void save_downscaler(const DSModel& model, const std::filesystem::path& path) {
  write_file(path, serialize_downscaler(model));
}

DSModel load_downscaler(const std::filesystem::path& path) { return parse_downscaler(read_file(path)); }

void RouteConfig::validate() const {
  lowpass.validate();
  require(factor >= 1, Errc::BadFactor, "factor must be positive");
  require(train_fraction > 0.0 && train_fraction < 1.0, Errc::BadConfig, "train_fraction must lie in (0,1)");
  require(lambda >= 0.0, Errc::BadConfig, "lambda must be non-negative");
}

RouteOutputs route_compare(const GridSeries& tp_hr, const GridSeries& vimd_hr, const PPModel& pp_model,
                           const RouteConfig& config) {
  config.validate();
  require(tp_hr.kind() == FieldKind::TP && vimd_hr.kind() == FieldKind::VIMD, Errc::KindMismatch,
          "route_compare expects TP and VIMD series");
  require(tp_hr.aligned_with(vimd_hr), Errc::GeometryMismatch, "TP and VIMD series are not aligned");
  const std::size_t n = tp_hr.size();
  const std::size_t train = static_cast<std::size_t>(config.train_fraction * static_cast<double>(n)) / 8 * 8;
  const std::size_t held = (n - train) / 8 * 8;
  require(train >= 8 && held >= 8, Errc::SeriesTooShort,
          "route comparison needs at least one whole day for training and one for evaluation");

  auto fit_and_apply = [&](const GridSeries& hr, DSModel& model) {
    PairSet pairs = make_pairs(hr, config.factor, config.lowpass);
    PairSet fit{pairs.hr.slice(0, train), pairs.lr.slice(0, train), pairs.factor};
    model = train_downscaler(fit, config.radius, config.lambda);
    return on_geometry(apply_downscaler(model, pairs.lr.slice(train, held)), hr.geometry());
  };

  RouteOutputs out{tp_hr.slice(train, held), tp_hr.slice(train, held), tp_hr.slice(train, held), {}, {}, train};
  out.route_a = fit_and_apply(tp_hr, out.model_a);
  const GridSeries pp = encode(pp_model, tp_hr, vimd_hr);
  out.route_b = decode(pp_model, fit_and_apply(pp, out.model_b));
  return out;
}

}  // namespace pp
