#pragma once

#include <span>

namespace pp {

/// Standard normal CDF, 0.5 * erfc(-x / sqrt(2)).
double normal_cdf(double x) noexcept;

/// Inverse standard normal CDF for p in (0,1); BadProb otherwise. Rational
/// approximation refined by one Halley step, absolute error below 1e-9 on
/// [1e-6, 1 - 1e-6].
double normal_quantile(double p);

/// Kolmogorov-Smirnov distance between the empirical CDF of `sample` and
/// N(0,1). The sample is copied and sorted.
double ks_statistic_normal(std::span<const double> sample);

}  // namespace pp
