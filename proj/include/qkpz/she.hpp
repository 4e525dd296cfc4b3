#pragma once

// Continuum stochastic heat equation dZ = (1/2) Z'' dT + Z dW (Ito),
// explicit Euler-Maruyama on a uniform grid, and second-moment oracles.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qkpz/errors.hpp"
#include "qkpz/rng.hpp"
#include "qkpz/stats.hpp"

namespace qkpz {

enum class SheBoundary {
  dirichlet, // end cells follow the zero-noise heat flow of the initial data
  periodic
};

enum class SheInitial { flat, delta, custom };

inline SheInitial she_initial_from_string(const std::string& s) {
  if (s == "flat") return SheInitial::flat;
  if (s == "delta") return SheInitial::delta;
  if (s == "custom") return SheInitial::custom;
  throw DomainError("unknown SHE initial condition '" + s + "'");
}

struct SheConfig {
  double dx = 0.05;
  double dt = 0.0;       // 0: dx^2 / 2
  double x_max = 6.0;    // domain [-x_max, x_max] (periodic: [-x_max, x_max))
  SheBoundary boundary = SheBoundary::dirichlet;
  double blowup_cap = 1e12;
  bool noise = true;

  double step() const { return dt > 0.0 ? dt : 0.5 * dx * dx; }
};

struct SHEGrid {
  SheConfig config;
  double T = 0.0;
  std::vector<double> X;
  std::vector<double> Z;
  std::vector<double> reference; // zero-noise companion (Dirichlet data)
  std::uint64_t steps = 0;
  std::uint64_t clipped = 0;     // cells set to 0 after undershooting

  std::size_t size() const { return Z.size(); }
  double clip_rate() const {
    return steps ? static_cast<double>(clipped) / (static_cast<double>(steps) * static_cast<double>(Z.size())) : 0.0;
  }
};

inline SHEGrid make_she_grid(const SheConfig& cfg, SheInitial ic, std::span<const double> custom = {}) {
  if (!(cfg.dx > 0.0) || !(cfg.x_max > cfg.dx)) throw DomainError("invalid SHE grid");
  if (cfg.step() > cfg.dx * cfg.dx * (1.0 + 1e-12))
    throw DomainError("explicit scheme needs dt <= dx^2");
  SHEGrid g;
  g.config = cfg;
  const auto half = static_cast<long>(std::llround(cfg.x_max / cfg.dx));
  if (std::abs(static_cast<double>(half) * cfg.dx - cfg.x_max) > 1e-9 * cfg.x_max)
    throw DomainError("x_max must be a multiple of dx");
  const long n = cfg.boundary == SheBoundary::periodic ? 2 * half : 2 * half + 1;
  for (long i = 0; i < n; ++i) g.X.push_back(static_cast<double>(i - half) * cfg.dx);
  switch (ic) {
  case SheInitial::flat: g.Z.assign(static_cast<std::size_t>(n), 1.0); break;
  case SheInitial::delta:
    g.Z.assign(static_cast<std::size_t>(n), 0.0);
    g.Z[static_cast<std::size_t>(half)] = 1.0 / cfg.dx;
    break;
  case SheInitial::custom:
    if (custom.size() != static_cast<std::size_t>(n)) throw DomainError("custom SHE profile has wrong length");
    g.Z.assign(custom.begin(), custom.end());
    break;
  }
  g.reference = g.Z;
  return g;
}

namespace detail {
inline void heat_update(const std::vector<double>& z, std::vector<double>& out, double lam, bool periodic) {
  const std::size_t n = z.size();
  if (periodic) {
    for (std::size_t i = 0; i < n; ++i) {
      const double l = z[i == 0 ? n - 1 : i - 1], r = z[i + 1 == n ? 0 : i + 1];
      out[i] = z[i] + lam * (l + r - 2.0 * z[i]);
    }
  } else {
    for (std::size_t i = 1; i + 1 < n; ++i) out[i] = z[i] + lam * (z[i - 1] + z[i + 1] - 2.0 * z[i]);
  }
}
} // namespace detail

/// One Euler-Maruyama step: Z += (dt/2dx^2) Lap Z + Z xi, xi ~ N(0, dt/dx).
inline void she_step(SHEGrid& g, RngStream& rng) {
  const double dt = g.config.step(), dx = g.config.dx;
  const double lam = dt / (2.0 * dx * dx);
  const double sd = std::sqrt(dt / dx);
  const bool periodic = g.config.boundary == SheBoundary::periodic;
  std::vector<double> next(g.Z.size());
  detail::heat_update(g.Z, next, lam, periodic);
  const std::size_t lo = periodic ? 0 : 1, hi = periodic ? g.Z.size() : g.Z.size() - 1;
  double zmax = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    if (g.config.noise) next[i] += g.Z[i] * sd * rng.normal();
    if (next[i] < 0.0) {
      next[i] = 0.0;
      ++g.clipped;
    }
    zmax = std::max(zmax, next[i]);
  }
  if (!periodic) {
    std::vector<double> ref(g.reference.size());
    detail::heat_update(g.reference, ref, lam, false);
    ref.front() = g.reference.front();
    ref.back() = g.reference.back();
    g.reference = std::move(ref);
    next.front() = g.reference.front();
    next.back() = g.reference.back();
  }
  if (!(zmax <= g.config.blowup_cap)) throw OverflowError("SHE field exceeded the blow-up cap");
  g.Z = std::move(next);
  g.T += dt;
  ++g.steps;
}

struct SheSnapshot {
  double T = 0.0;
  std::vector<double> Z;
};

/// Run to each requested time (rounded to the step grid) and record the field.
inline std::vector<SheSnapshot> she_solve(SHEGrid& g, std::span<const double> times, RngStream& rng) {
  std::vector<SheSnapshot> out;
  const double dt = g.config.step();
  for (double t : times) {
    const auto target = static_cast<std::uint64_t>(std::llround(t / dt));
    if (target < g.steps) throw DomainError("SHE snapshot times must be increasing");
    while (g.steps < target) she_step(g, rng);
    out.push_back({t, g.Z});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Second-moment oracles

struct MomentOracle {
  double h = 0.0;
  std::vector<double> T;
  std::vector<double> m;
  double at(double t) const {
    const double k = t / h;
    const auto i = static_cast<std::size_t>(std::floor(k));
    if (i + 1 >= m.size()) return m.back();
    const double f = k - static_cast<double>(i);
    return (1.0 - f) * m[i] + f * m[i + 1];
  }
};

/// m(T) = E Z_T(X)^2 for flat initial data: m = 1 + int_0^T m(S) k(T - S) dS with
/// k(tau) = (4 pi tau)^{-1/2} on R, or its periodisation with the given period.
/// The square-root singularity is removed with the exact Picard series
/// phi = sum_{n<=M} c_n T^{n/2} for the R kernel, c_{n+1} = c_n G(n/2+1)/(2 G(n/2+3/2));
/// the smooth remainder r = m - phi is found by product integration with
/// piecewise-linear r and analytic weights against (4 pi tau)^{-1/2}.
inline MomentOracle volterra_moment(double T_end, double h = 1e-3, double period = INFINITY) {
  if (!(h > 0.0) || !(T_end >= 0.0)) throw DomainError("invalid Volterra grid");
  const auto n = static_cast<std::size_t>(std::llround(T_end / h));
  constexpr int M = 8;
  std::array<double, M + 2> c{};
  c[0] = 1.0;
  for (int k = 0; k + 1 < M + 2; ++k)
    c[k + 1] = c[k] * std::exp(std::lgamma(0.5 * k + 1.0) - std::lgamma(0.5 * k + 1.5)) / 2.0;
  auto phi = [&](double t) {
    double s = 0.0;
    for (int k = 0; k <= M; ++k) s += c[k] * std::pow(t, 0.5 * k);
    return s;
  };
  // smooth part of the periodised kernel (images n != 0)
  auto ks = [&](double tau) {
    if (!std::isfinite(period) || tau <= 0.0) return 0.0;
    double s = 0.0;
    for (int k = 1; k < 64; ++k) {
      const double d = k * period;
      const double term = std::exp(-d * d / (4.0 * tau));
      s += 2.0 * term;
      if (term < 1e-18) break;
    }
    return s / std::sqrt(4.0 * std::numbers::pi * tau);
  };
  // weights for linear pieces against (4 pi (T_n - S))^{-1/2}; depend on n-k only
  std::vector<double> w_lo(n + 1), w_hi(n + 1); // piece [T_k, T_{k+1}] with d = n - k - 1
  for (std::size_t d = 0; d < n; ++d) {
    const double a = static_cast<double>(d) * h, b = a + h;
    const double sa = std::sqrt(a), sb = std::sqrt(b);
    const double total = h / (sa + sb) / std::sqrt(std::numbers::pi);
    const double hi = (2.0 * b - (2.0 / 3.0) * (a + b + sa * sb)) / ((sa + sb) * 2.0 * std::sqrt(std::numbers::pi));
    w_hi[d] = hi;
    w_lo[d] = total - hi;
  }
  MomentOracle o;
  o.h = h;
  std::vector<double> r(n + 1, 0.0), T(n + 1);
  for (std::size_t i = 0; i <= n; ++i) T[i] = static_cast<double>(i) * h;
  for (std::size_t i = 1; i <= n; ++i) {
    double acc = c[M + 1] * std::pow(T[i], 0.5 * (M + 1));
    std::vector<double> terms;
    terms.reserve(2 * i);
    for (std::size_t k = 0; k + 1 < i; ++k) {
      const std::size_t d = i - k - 1;
      terms.push_back(w_lo[d] * r[k] + w_hi[d] * r[k + 1]);
    }
    terms.push_back(w_lo[0] * r[i - 1]);
    if (std::isfinite(period))
      for (std::size_t k = 0; k < i; ++k) {
        const double wt = k == 0 ? 0.5 * h : h;
        terms.push_back(wt * ks(T[i] - T[k]) * (phi(T[k]) + r[k]));
      }
    acc += pairwise_sum(terms);
    r[i] = acc / (1.0 - w_hi[0]);
  }
  for (std::size_t i = 0; i <= n; ++i) {
    o.T.push_back(T[i]);
    o.m.push_back(phi(T[i]) + r[i]);
  }
  return o;
}

/// Exact E Z_T(0)^2 of the Euler-Maruyama scheme itself for flat data on a
/// periodic grid of n cells (translation-invariant covariance recursion).
inline double she_scheme_flat_second_moment(const SheConfig& cfg, double T) {
  const auto half = static_cast<long>(std::llround(cfg.x_max / cfg.dx));
  const std::size_t n = static_cast<std::size_t>(2 * half);
  const double dt = cfg.step();
  const double lam = dt / (2.0 * cfg.dx * cfg.dx);
  const double a0 = 1.0 - 2.0 * lam, a1 = lam;
  // covariance of A Z with A = (a1, a0, a1): stencil g = a * a
  const double g0 = a0 * a0 + 2.0 * a1 * a1, g1 = 2.0 * a0 * a1, g2 = a1 * a1;
  std::vector<double> C(n, 1.0), D(n);
  const auto steps = static_cast<std::uint64_t>(std::llround(T / dt));
  for (std::uint64_t s = 0; s < steps; ++s) {
    for (std::size_t d = 0; d < n; ++d) {
      auto at = [&](long k) { return C[static_cast<std::size_t>(((static_cast<long>(d) + k) % static_cast<long>(n) + static_cast<long>(n)) % static_cast<long>(n))]; };
      D[d] = g0 * C[d] + g1 * (at(1) + at(-1)) + g2 * (at(2) + at(-2));
    }
    D[0] += C[0] * dt / cfg.dx;
    std::swap(C, D);
  }
  return C[0];
}

} // namespace qkpz
