#pragma once

// Checks of the exact and asymptotic algebra behind the discrete SHE:
// the drift identity Omega Z = (1/2) Lap Z, the predictable bracket of the
// martingale M(x), gradient identities for Z, the exact-mean law
// E Z_t = p_t * Z_0 and the microscopic martingale functionals.

#include <algorithm>
#include <array>
#include <optional>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "qkpz/errors.hpp"
#include "qkpz/kernel.hpp"
#include "qkpz/process.hpp"
#include "qkpz/qcore.hpp"
#include "qkpz/rng.hpp"
#include "qkpz/stats.hpp"
#include "qkpz/transform.hpp"

namespace qkpz {

// ---------------------------------------------------------------------------
// Test functions

enum class TestFunctionKind { gaussian_bump, raised_cosine };

/// Smooth compactly supported phi with exact phi' and phi''.
///   gaussian_bump(s): exp(-X^2/2s^2) * psi(X/8s), psi(u) = exp(1 - 1/(1-u^2)) on |u|<1
///   raised_cosine(R): cos^4(pi X / 2R) on |X| < R
struct TestFunction {
  TestFunctionKind kind = TestFunctionKind::gaussian_bump;
  double width = 0.25;

  static TestFunction gaussian_bump(double sigma) { return {TestFunctionKind::gaussian_bump, sigma}; }
  static TestFunction raised_cosine(double R) { return {TestFunctionKind::raised_cosine, R}; }

  double support() const { return kind == TestFunctionKind::gaussian_bump ? 8.0 * width : width; }

  /// (phi, phi', phi'') at X.
  std::array<double, 3> eval(double X) const {
    if (std::abs(X) >= support()) return {0.0, 0.0, 0.0};
    if (kind == TestFunctionKind::gaussian_bump) {
      const double s = width, s2 = s * s;
      const double g = std::exp(-X * X / (2.0 * s2));
      const double g1 = -X / s2 * g;
      const double g2 = (X * X / (s2 * s2) - 1.0 / s2) * g;
      const double c = 8.0 * s;
      const double u = X / c, w = 1.0 - u * u;
      const double psi = std::exp(1.0 - 1.0 / w);
      const double psi_u = psi * (-2.0 * u / (w * w));
      const double psi_uu = psi * (4.0 * u * u / (w * w * w * w) - 2.0 / (w * w) - 8.0 * u * u / (w * w * w));
      const double p1 = psi_u / c, p2 = psi_uu / (c * c);
      return {g * psi, g1 * psi + g * p1, g2 * psi + 2.0 * g1 * p1 + g * p2};
    }
    const double k = std::numbers::pi / (2.0 * width);
    const double c = std::cos(k * X), s = std::sin(k * X);
    return {c * c * c * c, -4.0 * k * c * c * c * s, k * k * (12.0 * c * c * s * s - 4.0 * c * c * c * c)};
  }

  double operator()(double X) const { return eval(X)[0]; }
  double d1(double X) const { return eval(X)[1]; }
  double d2(double X) const { return eval(X)[2]; }
};

inline TestFunction test_function_from_string(const std::string& kind, double width) {
  if (kind == "gaussian" || kind == "gaussian_bump") return TestFunction::gaussian_bump(width);
  if (kind == "cosine" || kind == "raised_cosine") return TestFunction::raised_cosine(width);
  throw DomainError("unknown test function '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Reports

struct IdentityReport {
  std::string identity;
  std::size_t cases = 0;
  double max_abs_residual = 0.0;
  double max_rel_residual = 0.0;
  nlohmann::json params = nlohmann::json::object();

  void record(double abs_res, double rel_res) {
    ++cases;
    max_abs_residual = std::max(max_abs_residual, abs_res);
    max_rel_residual = std::max(max_rel_residual, rel_res);
  }
  void merge(const IdentityReport& o) {
    cases += o.cases;
    max_abs_residual = std::max(max_abs_residual, o.max_abs_residual);
    max_rel_residual = std::max(max_rel_residual, o.max_rel_residual);
  }
  nlohmann::json to_json() const {
    return {{"identity", identity},
            {"cases", cases},
            {"max_abs_residual", max_abs_residual},
            {"max_rel_residual", max_rel_residual},
            {"params", params}};
  }
};

inline nlohmann::json params_json(const QParameters& p) {
  return {{"model", to_string(p.model)}, {"spin", p.spin}, {"q", p.q}, {"nu", p.nu}};
}

// ---------------------------------------------------------------------------
// Local algebra. A local state is the pair of counts (n_x, n_{x+1}).

inline BondRates pair_rates(int nx, int nx1, const QParameters& p) {
  return p.model == Model::asep ? asep_pair_rates(nx, nx1, p) : asip_pair_rates(nx, nx1, p);
}

/// Omega = (q^2-1) c+ + (q^-2-1) c- + nu ln q, the coefficient of Z(x) in the drift.
inline double drift_coefficient_local(int nx, int nx1, const QParameters& p, double nu) {
  const BondRates r = pair_rates(nx, nx1, p);
  return std::expm1(2.0 * p.log_q) * r.plus + std::expm1(-2.0 * p.log_q) * r.minus +
         nu * p.log_q;
}

inline double drift_coefficient(const Configuration& c, int x, const QParameters& p) {
  detail::check_bond(c, x);
  return drift_coefficient_local(c.count(x), detail::right_count(c, x), p, p.nu);
}

/// (1/2) Lap Z(x) / Z(x) = (1/2)(q^{-2 eta(x+1)} + q^{2 eta(x)} - 2).
inline double half_laplacian_ratio(int nx, int nx1, const QParameters& p) {
  const double ex = nx + p.eta_offset(), ex1 = nx1 + p.eta_offset();
  return 0.5 * (std::expm1(-2.0 * ex1 * p.log_q) + std::expm1(2.0 * ex * p.log_q));
}

struct DriftResidual {
  double raw = 0.0;         // |Omega - Lap Z/2Z|
  double conditioned = 0.0; // raw divided by the size of the terms that cancel
};

inline DriftResidual drift_residual_local(int nx, int nx1, const QParameters& p, double nu) {
  const BondRates r = pair_rates(nx, nx1, p);
  const double a = std::expm1(2.0 * p.log_q) * r.plus;
  const double b = std::expm1(-2.0 * p.log_q) * r.minus;
  const double omega = a + b + nu * p.log_q;
  const double lap = half_laplacian_ratio(nx, nx1, p);
  const double ex = nx + p.eta_offset(), ex1 = nx1 + p.eta_offset();
  const double scale = std::max({1.0, std::abs(a) + std::abs(b) + std::abs(nu * p.log_q),
                                 0.5 * (std::exp(-2.0 * ex1 * p.log_q) + std::exp(2.0 * ex * p.log_q) + 2.0)});
  DriftResidual d;
  d.raw = std::abs(omega - lap);
  d.conditioned = d.raw / scale;
  return d;
}

struct DriftOptions {
  int asip_max_count = 20; // sampled ASIP occupations lie in {0..asip_max_count}
  double nu_shift = 0.0;   // nonzero: negative control with nu + nu_shift
};

/// Relative drift residual |Omega Z - Lap Z/2| / Z over local states.
/// ASEP with n_cases == 0 sweeps all (2j+1)^2 states; otherwise states are
/// drawn uniformly. max_rel_residual is the raw residual for ASEP and the
/// conditioned residual for ASIP (whose terms reach q^{-2 eta~}).
inline IdentityReport verify_drift_identity(const QParameters& p, std::size_t n_cases, RngStream& rng,
                                            const DriftOptions& opt = {}) {
  IdentityReport rep;
  rep.identity = "drift";
  rep.params = params_json(p);
  const double nu = p.nu + opt.nu_shift;
  double max_raw = 0.0, max_cond = 0.0;
  auto visit = [&](int a, int b) {
    const DriftResidual d = drift_residual_local(a, b, p, nu);
    max_raw = std::max(max_raw, d.raw);
    max_cond = std::max(max_cond, d.conditioned);
    rep.record(d.raw, p.model == Model::asep ? d.raw : d.conditioned);
  };
  if (p.model == Model::asep && n_cases == 0) {
    for (int a = 0; a <= p.twice_spin; ++a)
      for (int b = 0; b <= p.twice_spin; ++b) visit(a, b);
    rep.params["sweep"] = "exhaustive";
  } else {
    if (n_cases == 0) throw DomainError("ASIP drift check needs n_cases >= 1");
    const std::uint64_t levels =
        p.model == Model::asep ? static_cast<std::uint64_t>(p.twice_spin + 1)
                               : static_cast<std::uint64_t>(opt.asip_max_count + 1);
    for (std::size_t i = 0; i < n_cases; ++i)
      visit(static_cast<int>(rng.below(levels)), static_cast<int>(rng.below(levels)));
    rep.params["sweep"] = "sampled";
  }
  rep.params["max_raw_residual"] = max_raw;
  rep.params["max_conditioned_residual"] = max_cond;
  if (opt.nu_shift != 0.0) rep.params["nu_shift"] = opt.nu_shift;
  return rep;
}

// ---------------------------------------------------------------------------
// Brackets

/// d<M(x)>/dt / Z(x)^2 = (q^2-1)^2 c+ + (q^-2-1)^2 c-.
inline double bracket_ratio(int nx, int nx1, const QParameters& p) {
  const BondRates r = pair_rates(nx, nx1, p);
  const double a = std::expm1(2.0 * p.log_q), b = std::expm1(-2.0 * p.log_q);
  return a * a * r.plus + b * b * r.minus;
}

inline double bracket_exact(const Configuration& c, int x, const QParameters& p) {
  detail::check_bond(c, x);
  const double z = gartner_window(c, p, x, x)[0];
  return bracket_ratio(c.count(x), detail::right_count(c, x), p) * z * z;
}

struct ClosedForm {
  double value = 0.0;
  double magnitude = 0.0; // |first term| + |second term|
};

/// Closed form of the bracket ratio in centred variables:
/// (1/(2[2j])) [ (q^2-1)/(q-q^-1) (q^{2eta(x)} - q^{-2j})(q^{-2eta(x+1)} - q^{-2j})
///             - (q^-2-1)/(q-q^-1) (q^{2j} - q^{2eta(x)})(q^{2j} - q^{-2eta(x+1)}) ],
/// with j -> -k for ASIP.
inline ClosedForm bracket_closed_form_ratio(int nx, int nx1, const QParameters& p) {
  const double j = p.model == Model::asep ? p.spin : -p.spin;
  const double lq = p.log_q;
  const double ex = nx + p.eta_offset(), ex1 = nx1 + p.eta_offset();
  const double qq = -2.0 * std::sinh(-lq); // q - 1/q
  const double pref = 1.0 / (2.0 * q_number_log(2.0 * j, lq));
  const double t1 = std::expm1(2.0 * lq) / qq * (std::exp(2.0 * ex * lq) - std::exp(-2.0 * j * lq)) *
                    (std::exp(-2.0 * ex1 * lq) - std::exp(-2.0 * j * lq));
  const double t2 = std::expm1(-2.0 * lq) / qq * (std::exp(2.0 * j * lq) - std::exp(2.0 * ex * lq)) *
                    (std::exp(2.0 * j * lq) - std::exp(-2.0 * ex1 * lq));
  return {pref * (t1 - t2), std::abs(pref) * (std::abs(t1) + std::abs(t2))};
}

/// Agreement of bracket_ratio with the closed form, same sweep rules as the
/// drift check. Residuals are relative to max(|exact|, term magnitude).
inline IdentityReport verify_bracket_exact(const QParameters& p, std::size_t n_cases, RngStream& rng,
                                           int asip_max_count = 20) {
  IdentityReport rep;
  rep.identity = "bracket_exact";
  rep.params = params_json(p);
  double min_value = INFINITY;
  auto visit = [&](int a, int b) {
    const double ex = bracket_ratio(a, b, p);
    const ClosedForm cf = bracket_closed_form_ratio(a, b, p);
    const double scale = std::max(std::abs(ex), cf.magnitude);
    const double diff = std::abs(ex - cf.value);
    rep.record(diff, scale > 0.0 ? diff / scale : diff);
    min_value = std::min(min_value, ex);
  };
  if (p.model == Model::asep && n_cases == 0) {
    for (int a = 0; a <= p.twice_spin; ++a)
      for (int b = 0; b <= p.twice_spin; ++b) visit(a, b);
  } else {
    const std::uint64_t levels = p.model == Model::asep ? static_cast<std::uint64_t>(p.twice_spin + 1)
                                                        : static_cast<std::uint64_t>(asip_max_count + 1);
    for (std::size_t i = 0; i < std::max<std::size_t>(n_cases, 1); ++i)
      visit(static_cast<int>(rng.below(levels)), static_cast<int>(rng.below(levels)));
  }
  rep.params["min_bracket"] = min_value;
  return rep;
}

struct AsymptoticRow {
  double epsilon = 0.0;
  double defect_over_eps = 0.0;         // max_states D(eps)/eps, gradient form
  double defect_alt_over_eps = 0.0;     // same for the j^2 - eta(x)eta(x+1) form
  double qv_constant = 0.0;             // max_states bracket/(eps Z^2)
  double leading_coefficient = 0.0;     // 4 j^2 / [2j]_q
};

struct AsymptoticReport {
  double spin = 0.0;
  std::vector<AsymptoticRow> rows;
  bool defect_decreasing = false;
  bool alt_defect_decreasing = false;
  double qv_relative_change = 0.0; // between the two smallest eps

  nlohmann::json to_json() const {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& row : rows)
      r.push_back({{"epsilon", row.epsilon},
                   {"defect_over_eps", row.defect_over_eps},
                   {"alt_defect_over_eps", row.defect_alt_over_eps},
                   {"qv_constant", row.qv_constant},
                   {"leading_coefficient", row.leading_coefficient}});
    return {{"identity", "bracket_asymptotic"},
            {"spin", spin},
            {"rows", r},
            {"defect_decreasing", defect_decreasing},
            {"alt_defect_decreasing", alt_defect_decreasing},
            {"qv_relative_change", qv_relative_change}};
  }
};

/// D(eps) = |bracket - [(4 eps j^2/[2j]) Z^2 + (1/[2j]) grad+Z grad-Z]| / Z^2
/// with q = e^{-sqrt(eps)}, maximised over all local states. Here
/// grad- f(x) = f(x-1) - f(x), so grad-Z = (q^{2 eta(x)} - 1) Z.
inline AsymptoticReport bracket_asymptotic_check(int twice_j, std::span<const double> eps_grid) {
  if (eps_grid.size() < 3) throw DomainError("need at least three values of eps");
  for (std::size_t i = 1; i < eps_grid.size(); ++i)
    if (!(eps_grid[i] < eps_grid[i - 1])) throw DomainError("eps grid must be decreasing");
  AsymptoticReport rep;
  rep.spin = 0.5 * twice_j;
  for (double eps : eps_grid) {
    const auto [p, s] = weak_asymmetry(eps, 0.5 * twice_j, Model::asep);
    const double j = p.spin;
    const double qj = q_number_log(2.0 * j, p.log_q);
    AsymptoticRow row;
    row.epsilon = eps;
    row.leading_coefficient = 4.0 * j * j / qj;
    for (int a = 0; a <= twice_j; ++a)
      for (int b = 0; b <= twice_j; ++b) {
        const double br = bracket_ratio(a, b, p);
        const double ex = a - j, ex1 = b - j;
        const double gp = std::expm1(-2.0 * ex1 * p.log_q);
        const double gm = std::expm1(2.0 * ex * p.log_q);
        const double asym = 4.0 * eps * j * j / qj + gp * gm / qj;
        const double alt = 4.0 * eps / qj * (j * j - ex * ex1);
        row.defect_over_eps = std::max(row.defect_over_eps, std::abs(br - asym) / eps);
        row.defect_alt_over_eps = std::max(row.defect_alt_over_eps, std::abs(br - alt) / eps);
        row.qv_constant = std::max(row.qv_constant, br / eps);
      }
    rep.rows.push_back(row);
  }
  rep.defect_decreasing = rep.alt_defect_decreasing = true;
  for (std::size_t i = 1; i < rep.rows.size(); ++i) {
    rep.defect_decreasing &= rep.rows[i].defect_over_eps < rep.rows[i - 1].defect_over_eps;
    rep.alt_defect_decreasing &= rep.rows[i].defect_alt_over_eps < rep.rows[i - 1].defect_alt_over_eps;
  }
  const auto& a = rep.rows[rep.rows.size() - 2];
  const auto& b = rep.rows.back();
  rep.qv_relative_change = std::abs(a.qv_constant - b.qv_constant) / b.qv_constant;
  return rep;
}

/// |2j/[2j]_q - 1| / eps at q = e^{-sqrt(eps)}.
inline double r1_coefficient_ratio(double eps, double spin) {
  const double a = std::sqrt(eps);
  return std::abs(2.0 * spin / q_number_log(2.0 * spin, -a) - 1.0) / eps;
}

// ---------------------------------------------------------------------------
// Gradient identities on a configuration

struct GradientCheck {
  std::size_t sites = 0;
  double max_rel_residual = 0.0;
  double max_grad_ratio = 0.0; // max |grad+- Z| / (sqrt(eps) Z), sqrt(eps) = -ln q
};

/// grad+Z(x) = (q^{-2 eta(x+1)} - 1) Z(x) and grad-Z(x) = (q^{2 eta(x)} - 1) Z(x)
/// at every site with both neighbours, residual relative to the larger Z.
inline GradientCheck check_gradient_identities(const Configuration& c, const QParameters& p) {
  const GartnerField f = gartner(c, p);
  GradientCheck g;
  const double sq = -p.log_q;
  for (int x = -c.L + 1; x < f.last(); ++x) {
    const double z = f.at(x), zp = f.at(x + 1), zm = f.at(x - 1);
    const double ex = c.count(x) + p.eta_offset(), ex1 = c.count(x + 1) + p.eta_offset();
    const double gp = std::expm1(-2.0 * ex1 * p.log_q) * z;
    const double gm = std::expm1(2.0 * ex * p.log_q) * z;
    const double rp = std::abs((zp - z) - gp) / std::max(z, zp);
    const double rm = std::abs((zm - z) - gm) / std::max(z, zm);
    g.max_rel_residual = std::max({g.max_rel_residual, rp, rm});
    g.max_grad_ratio = std::max({g.max_grad_ratio, std::abs(zp - z) / (sq * z), std::abs(zm - z) / (sq * z)});
    ++g.sites;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Exact-mean law E Z_t = p_t * Z_0

/// log Z_0(y) = -2 h_0(y) ln q for the deterministic profiles, any y in Z.
inline double initial_log_z(InitialKind kind, const QParameters& p, long y) {
  if (p.model != Model::asep) throw DomainError("initial_log_z supports ASEP");
  double h = 0.0;
  if (kind == InitialKind::step) {
    h = -p.spin * static_cast<double>(std::labs(y));
  } else if (kind == InitialKind::flat_pairing) {
    // eta = +-1/2 alternating for half-odd j: h = 0 on even, -1/2 on odd sites
    h = (p.twice_spin % 2 == 1 && (y % 2 != 0)) ? -0.5 : 0.0;
  } else {
    throw DomainError("initial_log_z needs a deterministic profile");
  }
  return -2.0 * h * p.log_q;
}

/// (p_t * Z_0)(x) for x in [x_lo, x_hi] on the infinite lattice.
/// Z_0 grows at most like q^{-2j|y|}, so the kernel is tilted by up to
/// e^{2j|ln q| |z|}; the table must reach past the tilted bulk and keep
/// relative accuracy there.
inline std::vector<double> mean_oracle(InitialKind kind, const QParameters& p, double t, long x_lo,
                                       long x_hi) {
  const double a = 2.0 * p.spin * -p.log_q;
  const double reach = t * std::sinh(a) + 12.0 * std::sqrt(t * std::cosh(a));
  const HeatKernelTable k = heat_kernel_tails(t, default_kernel_window(t) + static_cast<long>(std::ceil(reach)));
  return convolve_kernel(k, [&](long y) { return std::exp(initial_log_z(kind, p, y)); }, x_lo, x_hi);
}

struct MeanTestResult {
  std::size_t replicas = 0;
  double max_abs_z = 0.0;         // max |mean - oracle| / stderr over the window
  double fraction_within_2 = 0.0; // share of points with |z| <= 2
  std::vector<double> mean, stderr_mean, oracle;
  bool passed(double z_max = 4.0, double frac = 0.95) const {
    return max_abs_z <= z_max && fraction_within_2 >= frac;
  }
};

/// samples[r][i]: Z of replica r at window point i.
inline MeanTestResult martingale_mean_test(const std::vector<std::vector<double>>& samples,
                                           std::span<const double> oracle) {
  if (samples.size() < 100) throw StatisticalPowerError("mean test needs >= 100 replicas");
  MeanTestResult r;
  r.replicas = samples.size();
  const std::size_t w = oracle.size();
  r.oracle.assign(oracle.begin(), oracle.end());
  std::vector<double> col(samples.size());
  std::size_t within = 0;
  for (std::size_t i = 0; i < w; ++i) {
    for (std::size_t k = 0; k < samples.size(); ++k) {
      if (samples[k].size() != w) throw DomainError("sample width does not match oracle");
      col[k] = samples[k][i];
    }
    const Summary s = summarize(col);
    r.mean.push_back(s.mean);
    r.stderr_mean.push_back(s.stderr_mean);
    // zero spread: sites no replica has disturbed yet; compare at round-off
    const double diff = std::abs(s.mean - oracle[i]);
    const double z = s.stderr_mean > 1e-12 * std::abs(s.mean) ? diff / s.stderr_mean
                                         : (diff <= 1e-10 * std::abs(oracle[i]) ? 0.0 : INFINITY);
    r.max_abs_z = std::max(r.max_abs_z, z);
    if (z <= 2.0) ++within;
  }
  r.fraction_within_2 = w ? static_cast<double>(within) / static_cast<double>(w) : 1.0;
  return r;
}

/// Ensemble of trajectories sharing one sample time t: uses each final
/// snapshot on the window [x_lo, x_hi].
inline MeanTestResult martingale_mean_test(std::span<const Trajectory> ensemble, InitialKind kind,
                                           const QParameters& p, double t, int x_lo, int x_hi) {
  std::vector<std::vector<double>> samples;
  for (const auto& tr : ensemble) {
    if (tr.snapshots.empty() || tr.snapshots.back().time != t)
      throw DomainError("trajectory lacks a snapshot at t");
    samples.push_back(gartner_window(tr.snapshots.back(), p, x_lo, x_hi));
  }
  const auto orc = mean_oracle(kind, p, t, x_lo, x_hi);
  return martingale_mean_test(samples, orc);
}

// ---------------------------------------------------------------------------
// Microscopic martingale functionals

struct MicroFields {
  double N = 0.0;              // N^eps_T(phi)
  double N_coarse = 0.0;       // same with every other snapshot (step-size study)
  double pairing_0 = 0.0, pairing_T = 0.0;
  double drift_integral = 0.0; // (1/2) int (Z, Lap phi)_eps ds
  double Q = 0.0;              // eps_j^2 int (Z^2, phi^2)_eps ds
  double R1 = 0.0, R2 = 0.0, R3 = 0.0;
  double bracket = 0.0;        // <N^eps_T(phi)> from the exact bracket; = Q + R1 + R2 + R3
  double Lambda = 0.0;         // N^2 - bracket
  double max_grad_ratio = 0.0; // max |grad+-Z|/(sqrt(eps) Z) over visited states
  std::size_t snapshots = 0;
};

/// Streams snapshots of one trajectory (increasing times, first at t = 0,
/// last at eps_j^-2 T) and integrates in time by the trapezoid rule.
///   (f, phi)_eps = eps_j sum_x phi(eps_j x) f(x)
///   N = (Z_T, phi) - (Z_0, phi) - (1/2) int (Z, Lap phi) ds
///   Q  = eps_j^2 int (Z^2, phi^2) ds
///   R1 = eps_j^2 (2j/[2j] - 1) int (Z^2, phi^2) ds
///   R2 = (eps_j/[2j]) int (grad-Z grad+Z, phi^2) ds
///   R3 = <N> - Q - R1 - R2, <N> = eps_j^2 int sum_x phi(eps_j x)^2 d<M(x)>/ds ds
class MicroFieldAccumulator {
public:
  MicroFieldAccumulator(const QParameters& p, const ScalingParameters& s, const TestFunction& phi, int L)
      : p_(p), s_(s), phi_(phi) {
    M_ = static_cast<int>(std::floor(phi.support() / s.eps_j));
    if (M_ + 2 > L - 1) throw RangeError("test function support exceeds the lattice window");
    const int n = 2 * M_ + 3; // sites -M-1 .. M+1
    phi_v_.resize(n);
    lap_phi_.resize(n);
    for (int i = 0; i < n; ++i) {
      const double x = i - M_ - 1;
      phi_v_[i] = phi(s.eps_j * x);
      lap_phi_[i] = phi(s.eps_j * (x + 1)) + phi(s.eps_j * (x - 1)) - 2.0 * phi(s.eps_j * x);
    }
  }

  void add(const Configuration& c) {
    if (!times_.empty() && !(c.time > times_.back())) throw DomainError("snapshot times must increase");
    const int lo = -M_ - 2, hi = M_ + 2;
    const std::vector<double> z = gartner_window(c, p_, lo, hi); // z[k] at x = lo + k
    const int n = 2 * M_ + 3;
    std::vector<double> a(n), b(n), cc(n), e(n), pp(n);
    const double sq = -p_.log_q;
    const RateEvaluator& eval = eval_();
    for (int i = 0; i < n; ++i) {
      const int x = i - M_ - 1;
      const double zx = z[x - lo], zp = z[x + 1 - lo], zm = z[x - 1 - lo];
      const double w = phi_v_[i] * phi_v_[i];
      pp[i] = phi_v_[i] * zx;
      a[i] = lap_phi_[i] * zx;
      b[i] = w * zx * zx;
      cc[i] = w * (zm - zx) * (zp - zx);
      const BondRates r = eval(c.count(x), c.count(x + 1));
      const double qa = std::expm1(2.0 * p_.log_q), qb = std::expm1(-2.0 * p_.log_q);
      e[i] = w * (qa * qa * r.plus + qb * qb * r.minus) * zx * zx;
      max_grad_ = std::max({max_grad_, std::abs(zp - zx) / (sq * zx), std::abs(zm - zx) / (sq * zx)});
    }
    const double ej = s_.eps_j;
    times_.push_back(c.time);
    P_.push_back(ej * pairwise_sum(pp));
    A_.push_back(ej * pairwise_sum(a));
    B_.push_back(ej * pairwise_sum(b));
    C_.push_back(ej * pairwise_sum(cc));
    E_.push_back(ej * ej * pairwise_sum(e));
  }

  MicroFields finish() const {
    if (times_.size() < 3) throw DomainError("need at least three snapshots");
    MicroFields f;
    f.snapshots = times_.size();
    const double ej = s_.eps_j;
    const double qj = q_number_log(2.0 * p_.spin, p_.log_q);
    const double intA = trapezoid(A_, 1), intB = trapezoid(B_, 1), intC = trapezoid(C_, 1),
                 intE = trapezoid(E_, 1);
    f.pairing_0 = P_.front();
    f.pairing_T = P_.back();
    f.drift_integral = 0.5 * intA;
    f.N = f.pairing_T - f.pairing_0 - f.drift_integral;
    if ((times_.size() - 1) % 2 == 0)
      f.N_coarse = f.pairing_T - f.pairing_0 - 0.5 * trapezoid(A_, 2);
    else
      f.N_coarse = NAN;
    f.Q = ej * ej * intB;
    f.R1 = ej * ej * (2.0 * p_.spin / qj - 1.0) * intB;
    f.R2 = ej / qj * intC;
    f.bracket = intE;
    f.R3 = f.bracket - f.Q - f.R1 - f.R2;
    f.Lambda = f.N * f.N - f.bracket;
    f.max_grad_ratio = max_grad_;
    return f;
  }

private:
  const RateEvaluator& eval_() {
    if (!eval_cache_) eval_cache_.emplace(p_);
    return *eval_cache_;
  }

  double trapezoid(const std::vector<double>& v, std::size_t stride) const {
    std::vector<double> terms;
    for (std::size_t i = stride; i < v.size(); i += stride)
      terms.push_back(0.5 * (times_[i] - times_[i - stride]) * (v[i] + v[i - stride]));
    return pairwise_sum(terms);
  }

  QParameters p_;
  ScalingParameters s_;
  TestFunction phi_;
  int M_ = 0;
  std::vector<double> phi_v_, lap_phi_;
  std::vector<double> times_, P_, A_, B_, C_, E_;
  double max_grad_ = 0.0;
  std::optional<RateEvaluator> eval_cache_;
};

struct KeyTermRow {
  double epsilon = 0.0;
  std::size_t replicas = 0;
  double mean_R2_sq = 0.0;
  double stderr = 0.0;
};

struct KeyTermTable {
  std::vector<KeyTermRow> rows;
  bool decreasing = false;
};

/// E(R2^2) per eps from per-replica R2 samples; eps listed in decreasing order.
inline KeyTermTable key_term_decay(std::span<const double> eps,
                                   const std::vector<std::vector<double>>& r2_samples) {
  if (eps.size() < 3 || r2_samples.size() != eps.size())
    throw DomainError("key-term decay needs ensembles at >= 3 values of eps");
  KeyTermTable t;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (r2_samples[i].size() < 100) throw StatisticalPowerError("key-term ensemble too small");
    std::vector<double> sq(r2_samples[i].size());
    for (std::size_t k = 0; k < sq.size(); ++k) sq[k] = r2_samples[i][k] * r2_samples[i][k];
    const Summary s = summarize(sq);
    t.rows.push_back({eps[i], s.n, s.mean, s.stderr_mean});
  }
  t.decreasing = true;
  for (std::size_t i = 1; i < t.rows.size(); ++i)
    t.decreasing &= t.rows[i].mean_R2_sq < t.rows[i - 1].mean_R2_sq;
  return t;
}

} // namespace qkpz
