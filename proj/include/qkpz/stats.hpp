#pragma once

// Deterministic ensemble statistics. Every reduction goes through pairwise
// summation over a fixed ordering, so results do not depend on how replicas
// were scheduled.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "qkpz/errors.hpp"
#include "qkpz/rng.hpp"

namespace qkpz {

inline double pairwise_sum(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n <= 16) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0; // unbiased sample variance
  double stderr_mean = 0.0;
};

inline Summary summarize(std::span<const double> v) {
  Summary s;
  s.n = v.size();
  if (s.n == 0) return s;
  s.mean = pairwise_sum(v) / static_cast<double>(s.n);
  if (s.n > 1) {
    std::vector<double> dev(s.n);
    for (std::size_t i = 0; i < s.n; ++i) dev[i] = (v[i] - s.mean) * (v[i] - s.mean);
    s.variance = pairwise_sum(dev) / static_cast<double>(s.n - 1);
    s.stderr_mean = std::sqrt(s.variance / static_cast<double>(s.n));
  }
  return s;
}

/// Standard error of the unbiased sample variance, from the fourth central
/// moment: Var(s^2) ~ (m4 - (n-3)/(n-1) s^4)/n.
inline double variance_stderr(std::span<const double> v) {
  const auto s = summarize(v);
  if (s.n < 4) return INFINITY;
  std::vector<double> d4(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    const double d = v[i] - s.mean;
    d4[i] = d * d * d * d;
  }
  const double n = static_cast<double>(s.n);
  const double m4 = pairwise_sum(d4) / n;
  const double var_s2 = (m4 - (n - 3.0) / (n - 1.0) * s.variance * s.variance) / n;
  return std::sqrt(std::max(var_s2, 0.0));
}

/// Sample quantile, linear interpolation between order statistics (type 7).
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw StatisticalPowerError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::vector<double> deciles(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  std::vector<double> out;
  for (int k = 1; k <= 9; ++k) out.push_back(quantile_sorted(s, 0.1 * k));
  return out;
}

/// Bootstrap standard errors of the nine deciles.
inline std::vector<double> bootstrap_decile_stderr(std::span<const double> v, int resamples,
                                                   RngStream& rng) {
  std::vector<std::vector<double>> draws(9);
  std::vector<double> boot(v.size());
  for (int r = 0; r < resamples; ++r) {
    for (auto& b : boot) b = v[rng.below(v.size())];
    const auto d = deciles(boot);
    for (int k = 0; k < 9; ++k) draws[k].push_back(d[k]);
  }
  std::vector<double> out;
  for (auto& d : draws) out.push_back(std::sqrt(summarize(d).variance));
  return out;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw StatisticalPowerError("regression needs >= 2 points");
  const double mx = pairwise_sum(x) / n;
  const double my = pairwise_sum(y) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

/// Slope of log(y) against log(x).
inline double log_log_slope(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return least_squares(lx, ly).slope;
}

} // namespace qkpz
