#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "pp/grid.hpp"

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Series of `steps` rasters filled by f(step, row, col).
template <class F>
pp::GridSeries make_series(pp::FieldKind kind, std::size_t nlat, std::size_t nlon, std::size_t steps, F f,
                           std::int64_t t0 = 1262304000) {
  auto g = pp::Geometry::regular(kind, nlat, nlon, 60.0, 0.0, 0.25);
  std::vector<std::vector<float>> v(steps, std::vector<float>(nlat * nlon));
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < nlat; ++i)
      for (std::size_t j = 0; j < nlon; ++j) v[t][i * nlon + j] = static_cast<float>(f(t, i, j));
  return pp::GridSeries(std::move(g), t0, std::move(v));
}

inline pp::GridSeries random_series(pp::FieldKind kind, std::size_t nlat, std::size_t nlon, std::size_t steps,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  return make_series(kind, nlat, nlon, steps, [&](std::size_t, std::size_t, std::size_t) {
    const double z = n(rng);
    return kind == pp::FieldKind::TP ? std::max(0.0, z) : z;
  });
}

}  // namespace testutil
