#pragma once

// Heat kernel of the continuous-time simple random walk with generator
// (1/2)Delta on Z, its gradients, and the integral identities built on it.

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include "qkpz/errors.hpp"
#include "qkpz/stats.hpp"

namespace qkpz {

namespace detail {

struct GaussRule {
  std::vector<double> nodes;   // on [-1, 1]
  std::vector<double> weights;
};

inline const GaussRule& gauss_legendre(unsigned n) {
  static std::mutex mu;
  static std::map<unsigned, GaussRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  GaussRule r;
  const auto zeros = boost::math::legendre_p_zeros<double>(static_cast<int>(n));
  for (double z : zeros) {
    const double dp = boost::math::legendre_p_prime<double>(static_cast<int>(n), z);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    if (z == 0.0) {
      r.nodes.push_back(0.0);
      r.weights.push_back(w);
    } else {
      r.nodes.push_back(z);
      r.weights.push_back(w);
      r.nodes.push_back(-z);
      r.weights.push_back(w);
    }
  }
  return cache.emplace(n, std::move(r)).first->second;
}

/// Frequencies beyond theta_cut contribute below e^{-40} to the Fourier integral.
inline double theta_cut(double t) {
  if (t <= 20.0) return std::numbers::pi;
  return std::acos(1.0 - 40.0 / t);
}

/// p_t(x) for x = 0..xmax by (1/pi) int_0^cut e^{t(cos th - 1)} cos(th x) dth
/// with an n-point Gauss-Legendre rule.
inline std::vector<double> fourier_kernel(double t, long xmax, unsigned n) {
  const GaussRule& g = gauss_legendre(n);
  const double cut = theta_cut(t);
  const double half = 0.5 * cut;
  std::vector<double> th(g.nodes.size()), w(g.nodes.size());
  for (std::size_t k = 0; k < g.nodes.size(); ++k) {
    th[k] = half * (g.nodes[k] + 1.0);
    w[k] = half * g.weights[k] * std::exp(-t * 2.0 * std::pow(std::sin(0.5 * th[k]), 2)) /
           std::numbers::pi;
  }
  std::vector<double> out(static_cast<std::size_t>(xmax + 1));
  std::vector<double> terms(th.size());
  for (long x = 0; x <= xmax; ++x) {
    for (std::size_t k = 0; k < th.size(); ++k)
      terms[k] = w[k] * std::cos(th[k] * static_cast<double>(x));
    out[static_cast<std::size_t>(x)] = pairwise_sum(terms);
  }
  return out;
}

} // namespace detail

struct KernelOptions {
  long max_window = 2'000'000;   // cap for window auto-enlargement
  double stability = 1e-15;      // node doubling stops when the max change is below this
};

struct HeatKernelTable {
  double t = 0.0;
  long x_max = 0;
  std::vector<double> values; // values[x + x_max] = p_t(x)
  double tail_mass = 0.0;     // 1 - sum over window (rounding included)

  double at(long x) const {
    if (x < -x_max || x > x_max) return 0.0;
    return values[static_cast<std::size_t>(x + x_max)];
  }
  double mass() const { return pairwise_sum(values); }
};

inline long default_kernel_window(double t) {
  return static_cast<long>(std::ceil(8.0 * std::sqrt(t) + 30.0));
}

/// p_t(x) on [-x_max, x_max]; x_max = 0 picks a window holding mass >= 1 - 1e-10
/// and any given window is enlarged until it does.
inline HeatKernelTable heat_kernel(double t, long x_max = 0, const KernelOptions& opt = {}) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("heat kernel needs t >= 0");
  HeatKernelTable tab;
  tab.t = t;
  tab.x_max = std::max(x_max, t == 0.0 ? 1L : default_kernel_window(t));
  if (t == 0.0) {
    tab.values.assign(static_cast<std::size_t>(2 * tab.x_max + 1), 0.0);
    tab.values[static_cast<std::size_t>(tab.x_max)] = 1.0;
    return tab;
  }
  for (;;) {
    if (tab.x_max > opt.max_window) throw RangeError("heat kernel window cap exceeded");
    const double cut = detail::theta_cut(t);
    // oscillation count of cos(theta x) over [0, cut] plus the Gaussian envelope
    unsigned n = 16;
    const double osc = cut * static_cast<double>(tab.x_max) / std::numbers::pi +
                       cut * std::sqrt(t);
    while (n < 2.0 * osc + 16.0) n *= 2;
    std::vector<double> half = detail::fourier_kernel(t, tab.x_max, n);
    for (;;) {
      if (n > (1u << 16)) throw QuadratureError("heat kernel quadrature did not stabilise");
      std::vector<double> finer = detail::fourier_kernel(t, tab.x_max, 2 * n);
      double diff = 0.0;
      for (std::size_t i = 0; i < half.size(); ++i) diff = std::max(diff, std::abs(finer[i] - half[i]));
      half = std::move(finer);
      n *= 2;
      if (diff <= opt.stability) break;
    }
    tab.values.assign(static_cast<std::size_t>(2 * tab.x_max + 1), 0.0);
    for (long x = 0; x <= tab.x_max; ++x) {
      const double v = std::max(0.0, half[static_cast<std::size_t>(x)]);
      tab.values[static_cast<std::size_t>(tab.x_max + x)] = v;
      tab.values[static_cast<std::size_t>(tab.x_max - x)] = v;
    }
    tab.tail_mass = 1.0 - tab.mass();
    if (tab.tail_mass <= 1e-10) return tab;
    tab.x_max *= 2;
  }
}

/// p_t(x) with small *relative* error far out in the tails, where the
/// quadrature table is only accurate in absolute terms. Needed when the
/// kernel is summed against exponentially growing data. Miller's backward
/// recurrence I_{k-1} = (2k/t) I_k + I_{k+1}, normalised by sum_x p_t(x) = 1.
inline HeatKernelTable heat_kernel_tails(double t, long x_max) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("heat kernel needs t >= 0");
  if (x_max < 1) throw DomainError("heat kernel window must be >= 1");
  HeatKernelTable tab;
  tab.t = t;
  tab.x_max = x_max;
  tab.values.assign(static_cast<std::size_t>(2 * x_max + 1), 0.0);
  if (t == 0.0) {
    tab.values[static_cast<std::size_t>(x_max)] = 1.0;
    return tab;
  }
  // start well past both the window and the bulk of the mass
  const long start = std::max(x_max, default_kernel_window(t)) + static_cast<long>(std::ceil(4.0 * std::sqrt(t))) + 40;
  std::vector<double> v(static_cast<std::size_t>(start + 2), 0.0);
  v[static_cast<std::size_t>(start)] = 1.0;
  for (long k = start; k >= 1; --k) {
    const auto i = static_cast<std::size_t>(k);
    v[i - 1] = (2.0 * static_cast<double>(k) / t) * v[i] + v[i + 1];
    if (v[i - 1] > 1e250)
      for (std::size_t m = i - 1; m < v.size(); ++m) v[m] *= 1e-250;
  }
  std::vector<double> terms(v.size());
  terms[0] = v[0];
  for (std::size_t k = 1; k < v.size(); ++k) terms[k] = 2.0 * v[k];
  const double norm = pairwise_sum(terms);
  for (long x = 0; x <= x_max; ++x) {
    const double p = v[static_cast<std::size_t>(x)] / norm;
    tab.values[static_cast<std::size_t>(x_max + x)] = p;
    tab.values[static_cast<std::size_t>(x_max - x)] = p;
  }
  tab.tail_mass = std::max(0.0, 1.0 - tab.mass());
  return tab;
}

/// Gradients on [-x_max, x_max] using p = 0 outside the table window.
struct KernelGradients {
  long x_max = 0;
  std::vector<double> plus;  // p(x+1) - p(x)
  std::vector<double> minus; // p(x-1) - p(x)
  std::vector<double> K;     // plus * minus

  double plus_at(long x) const { return at(plus, x); }
  double minus_at(long x) const { return at(minus, x); }
  double K_at(long x) const { return at(K, x); }

private:
  double at(const std::vector<double>& v, long x) const {
    if (x < -x_max || x > x_max) return 0.0;
    return v[static_cast<std::size_t>(x + x_max)];
  }
};

inline KernelGradients kernel_gradients(const HeatKernelTable& p) {
  KernelGradients g;
  g.x_max = p.x_max;
  const auto n = p.values.size();
  g.plus.resize(n);
  g.minus.resize(n);
  g.K.resize(n);
  for (long x = -p.x_max; x <= p.x_max; ++x) {
    const auto i = static_cast<std::size_t>(x + p.x_max);
    g.plus[i] = p.at(x + 1) - p.at(x);
    g.minus[i] = p.at(x - 1) - p.at(x);
    g.K[i] = g.plus[i] * g.minus[i];
  }
  return g;
}

/// sum_x K_t(x) by direct summation over the table window.
inline double kernel_sum_K(double t) {
  const KernelGradients g = kernel_gradients(heat_kernel(t));
  return pairwise_sum(g.K);
}

/// sum_x K_t(x) from Parseval: (1/2pi) int (cos 2th - 2 cos th + 1) e^{2t(cos th - 1)} dth.
inline double kernel_sum_K_parseval(double t) {
  const double cut = detail::theta_cut(2.0 * t);
  unsigned n = 64;
  auto eval = [&](unsigned m) {
    const auto& g = detail::gauss_legendre(m);
    std::vector<double> terms(g.nodes.size());
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const double th = 0.5 * cut * (g.nodes[k] + 1.0);
      terms[k] = 0.5 * cut * g.weights[k] * (std::cos(2.0 * th) - 2.0 * std::cos(th) + 1.0) *
                 std::exp(2.0 * t * (std::cos(th) - 1.0));
    }
    return pairwise_sum(terms) / std::numbers::pi;
  };
  double prev = eval(n);
  for (;;) {
    n *= 2;
    const double next = eval(n);
    if (std::abs(next - prev) <= 1e-16 || n >= (1u << 14)) return next;
    prev = next;
  }
}

/// Continuum heat kernel (2 pi T)^{-1/2} exp(-X^2 / 2T).
inline std::vector<double> gaussian_kernel(double T, std::span<const double> X) {
  if (!(T > 0.0)) throw DomainError("gaussian kernel needs T > 0");
  std::vector<double> v;
  v.reserve(X.size());
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi * T);
  for (double x : X) v.push_back(c * std::exp(-x * x / (2.0 * T)));
  return v;
}

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
};

namespace detail {
/// int_a^b f(t) dt through u = log(1 + t - a), adaptive Gauss-Kronrod.
template <class F>
QuadratureResult integrate_log_time(F f, double a, double b, double tol = 1e-11) {
  auto g = [&](double u) {
    const double s = std::exp(u);
    return f(a + std::expm1(u)) * s;
  };
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      g, 0.0, std::log1p(b - a), 20, tol, &err);
  if (!std::isfinite(v)) throw QuadratureError("non-finite time integral");
  return {v, err};
}
} // namespace detail

/// S(T) = sum_x int_0^T K_t(x) dt; tends to 0 like T^{-1/2}.
inline QuadratureResult identity_zero(double T) {
  if (!(T >= 1.0)) throw DomainError("identity_zero needs T >= 1");
  auto r = detail::integrate_log_time([](double t) { return kernel_sum_K(t); }, 0.0, T, 1e-10);
  if (r.error_estimate > 1e-6 * std::max(1e-3, std::abs(r.value)))
    throw QuadratureError("identity_zero quadrature error too large");
  return r;
}

struct IdentityOneResult {
  double T = 0.0;
  double truncated = 0.0; // sum_x int_0^T |K_t(x)| dt
  double tail = 0.0;      // bound on the remainder: int_T^inf sum_x (grad p_t)^2 dt
  double total() const { return truncated + tail; }
};

/// Truncated sum_x int |K_t| plus a tail bound; the full value is < 1.
/// The tail uses |ab| <= (a^2 + b^2)/2 and int_T^inf sum_x (grad^+ p_t)^2 dt = p_{2T}(0).
inline IdentityOneResult identity_one(double T) {
  if (!(T >= 1.0)) throw DomainError("identity_one needs T >= 1");
  IdentityOneResult r;
  r.T = T;
  r.truncated = detail::integrate_log_time(
                    [](double t) {
                      const KernelGradients g = kernel_gradients(heat_kernel(t));
                      std::vector<double> a(g.K.size());
                      for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::abs(g.K[i]);
                      return pairwise_sum(a);
                    },
                    0.0, T, 1e-9)
                    .value;
  r.tail = heat_kernel(2.0 * T).at(0);
  return r;
}

struct GeneralIdentityResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double truncated = 0.0;      // quadrature part up to T_max
  double tail = 0.0;           // contribution beyond T_max
  double quad_error = 0.0;
  double T_max = 0.0;
};

/// (1/d) sum_x sum_n int grad_n p_{t+s}(x+y) grad_n p_{t+s'}(x+y') dt against
/// p_{|s-s'|}(y-y') for d in {1, 2}. In d = 2 the walk has generator (1/4)Delta,
/// so p_t(x1, x2) = p_{t/2}(x1) p_{t/2}(x2) and every lattice sum factorises.
/// The integrand is evaluated by summation over heat-kernel tables up to T_max;
/// beyond T_max it equals -2 d/dtau p_tau(y'-y) with tau = 2t + s + s', whose
/// integral is p at tau(T_max).
inline GeneralIdentityResult identity_general(double s, double sp, std::span<const long> y,
                                              std::span<const long> yp, int d,
                                              double T_max = 2e4, double tol = 1e-6) {
  if (d != 1 && d != 2) throw DomainError("identity_general supports d = 1, 2");
  if (y.size() != static_cast<std::size_t>(d) || yp.size() != static_cast<std::size_t>(d))
    throw DomainError("y and y' must have d components");
  if (std::abs(s - sp) > 1e3) throw DomainError("|s - s'| must be <= 1e3");
  std::vector<long> delta(static_cast<std::size_t>(d));
  for (int n = 0; n < d; ++n) delta[n] = yp[n] - y[n];
  const double time_scale = d == 1 ? 1.0 : 0.5;

  // sum_z f(z) g(z + D) with both tables read as zero outside their windows
  auto corr = [](const std::vector<double>& f, long fx, const std::vector<double>& g, long gx,
                 long D) {
    std::vector<double> terms;
    terms.reserve(f.size());
    for (long z = -fx; z <= fx; ++z) {
      const long w = z + D;
      if (w < -gx || w > gx) continue;
      terms.push_back(f[static_cast<std::size_t>(z + fx)] * g[static_cast<std::size_t>(w + gx)]);
    }
    return pairwise_sum(terms);
  };

  auto integrand = [&](double t) {
    const double a = (t + s) * time_scale, b = (t + sp) * time_scale;
    if (a < 0.0 || b < 0.0) return 0.0;
    const HeatKernelTable pa = heat_kernel(a), pb = heat_kernel(b);
    const KernelGradients ga = kernel_gradients(pa), gb = kernel_gradients(pb);
    double total = 0.0;
    for (int n = 0; n < d; ++n) {
      double term = corr(ga.plus, ga.x_max, gb.plus, gb.x_max, delta[n]);
      for (int m = 0; m < d; ++m)
        if (m != n) term *= corr(pa.values, pa.x_max, pb.values, pb.x_max, delta[m]);
      total += term;
    }
    return total / d;
  };

  const double t0 = std::max(-s, -sp);
  GeneralIdentityResult r;
  r.T_max = T_max;
  auto q = detail::integrate_log_time(integrand, t0, T_max, 1e-10);
  r.truncated = q.value;
  r.quad_error = q.error_estimate;
  const double tau_max = 2.0 * T_max + s + sp;
  r.tail = 1.0;
  for (int n = 0; n < d; ++n) r.tail *= heat_kernel(tau_max * time_scale).at(delta[n]);
  r.lhs = r.truncated + r.tail;
  const double tau0 = std::abs(s - sp);
  r.rhs = 1.0;
  for (int n = 0; n < d; ++n) r.rhs *= heat_kernel(tau0 * time_scale).at(delta[n]);
  if (r.quad_error > tol) throw QuadratureError("identity_general: quadrature error above tolerance");
  return r;
}

/// (p_t * f)(x) for x in [x_lo, x_hi], with f given as a callable on Z.
template <class F>
std::vector<double> convolve_kernel(const HeatKernelTable& p, F&& f, long x_lo, long x_hi) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(x_hi - x_lo + 1));
  std::vector<double> terms(p.values.size());
  for (long x = x_lo; x <= x_hi; ++x) {
    for (long z = -p.x_max; z <= p.x_max; ++z)
      terms[static_cast<std::size_t>(z + p.x_max)] = p.at(z) * f(x - z);
    out.push_back(pairwise_sum(terms));
  }
  return out;
}

} // namespace qkpz
