#pragma once

// Height function, the microscopic Gartner transform Z = q^{-2h + nu t},
// and the macroscopic rescaling of Z.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qkpz/errors.hpp"
#include "qkpz/process.hpp"
#include "qkpz/qcore.hpp"
#include "qkpz/stats.hpp"

namespace qkpz {

/// h(x) = N(x) + offset * x with N(x) the integer part carried by the
/// particle counts (N(0) = flow) and offset the centring constant of eta.
struct HeightField {
  int L = 0;
  std::vector<std::int64_t> counts; // counts[x + L] = N(x)
  double offset = 0.0;

  double at(int x) const {
    if (x < -L || x > last()) throw RangeError("height queried off the lattice");
    return static_cast<double>(counts[static_cast<std::size_t>(x + L)]) + offset * x;
  }
  int last() const { return static_cast<int>(counts.size()) - 1 - L; }
};

/// h(0) = flow; h(x) - h(x-1) = eta(x).
inline HeightField height_from_config(const Configuration& c, const QParameters& p) {
  HeightField h;
  h.L = c.L;
  h.offset = p.eta_offset();
  h.counts.assign(static_cast<std::size_t>(c.num_sites()), 0);
  const auto L = static_cast<std::size_t>(c.L);
  h.counts[L] = c.flow;
  for (std::size_t i = L + 1; i < h.counts.size(); ++i) h.counts[i] = h.counts[i - 1] + c.occupancy[i];
  for (std::size_t i = L; i-- > 0;) h.counts[i] = h.counts[i + 1] - c.occupancy[i + 1];
  return h;
}

inline constexpr double kMaxLogZ = 700.0;

/// Z_t(x) = q^{-2h(x) + nu t}, held as log Z.
class GartnerField {
public:
  GartnerField() = default;
  GartnerField(int L, double time, std::vector<double> log_values)
      : L_(L), time_(time), logz_(std::move(log_values)) {}

  int L() const { return L_; }
  int last() const { return static_cast<int>(logz_.size()) - 1 - L_; }
  double time() const { return time_; }
  std::span<const double> log_values() const { return logz_; }

  double log_at(int x) const {
    if (x < -L_ || x > last()) throw RangeError("Z queried at site " + std::to_string(x));
    return logz_[static_cast<std::size_t>(x + L_)];
  }
  double at(int x) const { return std::exp(log_at(x)); }

  /// Piecewise-linear interpolation in x; exact lattice value at integers.
  double interpolate(double x) const {
    if (!(x >= -L_ && x <= last())) throw RangeError("interpolation point outside the lattice");
    const double fl = std::floor(x);
    const int x0 = static_cast<int>(fl);
    const double f = x - fl;
    if (f == 0.0) return at(x0);
    return (1.0 - f) * at(x0) + f * at(x0 + 1);
  }

  double grad_plus(int x) const { return at(x + 1) - at(x); }
  double grad_minus(int x) const { return at(x - 1) - at(x); }

  std::vector<double> values() const {
    std::vector<double> v(logz_.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(logz_[i]);
    return v;
  }

private:
  int L_ = 0;
  double time_ = 0.0;
  std::vector<double> logz_;
};

inline GartnerField gartner(const HeightField& h, double t, const QParameters& p) {
  std::vector<double> lz(h.counts.size());
  const double nut = p.nu * t;
  for (std::size_t i = 0; i < lz.size(); ++i) {
    lz[i] = (nut - 2.0 * h.at(static_cast<int>(i) - h.L)) * p.log_q;
    if (!(std::abs(lz[i]) <= kMaxLogZ))
      throw OverflowError("|log Z| exceeds " + std::to_string(kMaxLogZ) + " at x = " +
                          std::to_string(static_cast<int>(i) - h.L));
  }
  return GartnerField(h.L, t, std::move(lz));
}

inline GartnerField gartner(const Configuration& c, const QParameters& p) {
  return gartner(height_from_config(c, p), c.time, p);
}

/// Z(x) on [x_lo, x_hi] only, for long lattices whose far field would
/// leave the representable range. Values outside the window are not stored
/// and queries there raise a range error.
inline std::vector<double> gartner_window(const Configuration& c, const QParameters& p,
                                          int x_lo, int x_hi) {
  if (x_lo < -c.L || x_hi > c.last_site() || x_lo > x_hi) throw RangeError("window outside lattice");
  const HeightField h = height_from_config(c, p);
  std::vector<double> z;
  z.reserve(static_cast<std::size_t>(x_hi - x_lo + 1));
  const double nut = p.nu * c.time;
  for (int x = x_lo; x <= x_hi; ++x) {
    const double lz = (nut - 2.0 * h.at(x)) * p.log_q;
    if (!(std::abs(lz) <= kMaxLogZ)) throw OverflowError("|log Z| too large in window");
    z.push_back(std::exp(lz));
  }
  return z;
}

struct ScaledField {
  double T = 0.0;
  std::vector<double> X;
  std::vector<double> values;
  bool step_normalized = false;
  double normalization = 1.0; // 1/(2 sqrt(eps)) when step_normalized
};

inline ScaledField rescale(const GartnerField& field, const ScalingParameters& s,
                           std::span<const double> X_grid, double T, bool step_normalized) {
  const double t_micro = T / (s.eps_j * s.eps_j);
  if (std::abs(field.time() - t_micro) > 1e-9 * std::max(1.0, t_micro))
    throw DomainError("field time does not match eps_j^-2 T");
  ScaledField out;
  out.T = T;
  out.X.assign(X_grid.begin(), X_grid.end());
  out.step_normalized = step_normalized;
  out.normalization = step_normalized ? 1.0 / (2.0 * std::sqrt(s.epsilon)) : 1.0;
  out.values.reserve(X_grid.size());
  for (double X : X_grid) {
    const double x = X / s.eps_j;
    if (!(x >= -field.L() && x <= field.last()))
      throw RangeError("macroscopic point X = " + std::to_string(X) + " lies outside the lattice");
    out.values.push_back(out.normalization * field.interpolate(x));
  }
  return out;
}

/// Uniform grid on [-window, window] with spacing max(eps_j, window/512).
inline std::vector<double> default_grid(double window, const ScalingParameters& s) {
  const double dx = std::max(s.eps_j, window / 512.0);
  const auto n = static_cast<long>(std::floor(window / dx + 1e-9));
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(2 * n + 1));
  for (long i = -n; i <= n; ++i) g.push_back(static_cast<double>(i) * dx);
  return g;
}

struct StepMass {
  double eps_j_normalized = 0.0; // eps_j * sum_x Z*_0(x)
  double eps_normalized = 0.0;   // eps   * sum_x Z*_0(x)
};

/// Closed form of the step-IC mass on all of Z:
/// sum_x e^{-2j sqrt(eps)|x|} = (1 + r)/(1 - r), r = e^{-2j sqrt(eps)}.
inline StepMass step_mass_closed_form(double eps, double spin) {
  const double a = 2.0 * spin * std::sqrt(eps);
  const double sum = (1.0 + std::exp(-a)) / -std::expm1(-a);
  const double zstar = sum / (2.0 * std::sqrt(eps));
  return {2.0 * spin * eps * zstar, eps * zstar};
}

/// Same quantity summed over a lattice field.
inline StepMass step_mass(const GartnerField& f, const ScalingParameters& s) {
  const std::vector<double> v = f.values();
  const double zstar = pairwise_sum(v) / (2.0 * std::sqrt(s.epsilon));
  return {s.eps_j * zstar, s.epsilon * zstar};
}

} // namespace qkpz
