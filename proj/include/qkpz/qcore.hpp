#pragma once

// q-deformed arithmetic, model parameters and the weak-asymmetry scaling.

#include <cmath>
#include <string>
#include <utility>

#include "qkpz/errors.hpp"

namespace qkpz {

enum class Model { asep, asip };

inline std::string to_string(Model m) { return m == Model::asep ? "asep" : "asip"; }

inline Model model_from_string(const std::string& s) {
  if (s == "asep" || s == "ASEP") return Model::asep;
  if (s == "asip" || s == "ASIP") return Model::asip;
  throw DomainError("unknown model '" + s + "'");
}

/// q-number [n]_q = (q^n - q^-n)/(q - q^-1) given ln q < 0.
///
/// Evaluated as sinh(n a)/sinh(a) with a = -ln q, which is free of the
/// cancellation the quotient form suffers as q -> 1.
inline double q_number_log(double n, double log_q) {
  const double a = -log_q;
  return std::sinh(n * a) / std::sinh(a);
}

inline double q_number(double n, double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("q-number requires q in (0,1)");
  return q_number_log(n, std::log(q));
}

/// Parameters of ASEP(q,j) or ASIP(q,k).
///
/// For ASEP the spin is held as the integer 2j so that every exponent of q in
/// the rates is an integer. `spin` is the real value j (or k).
struct QParameters {
  Model model = Model::asep;
  double q = 0.5;
  double log_q = -0.6931471805599453;
  int twice_spin = 1; // 2j for ASEP; unused (0) for ASIP
  double spin = 0.5;
  double nu = 0.0;

  /// Offset turning an occupation count into the centred variable:
  /// eta = count - j for ASEP and eta = count + k for ASIP (the j -> -k image).
  double eta_offset() const { return model == Model::asep ? -spin : spin; }

  static QParameters asep(int twice_j, double q);
  static QParameters asep_log(int twice_j, double log_q);
  static QParameters asip(double k, double q);
  static QParameters asip_log(double k, double log_q);
};

/// nu = ([4s]_q / (2[2s]_q) - 1)/ln q, s = j or k.
///
/// [4s]/(2[2s]) = cosh(2 s a), so nu = -2 sinh^2(s a)/a with a = -ln q.
inline double drift_constant_log(double spin, double log_q) {
  const double a = -log_q;
  const double sh = std::sinh(spin * a);
  return -2.0 * sh * sh / a;
}

inline double drift_constant(const QParameters& p) { return drift_constant_log(p.spin, p.log_q); }

namespace detail {
inline void check_log_q(double log_q) {
  if (!(log_q < 0.0) || !std::isfinite(log_q)) throw DomainError("q must lie in (0,1)");
}
} // namespace detail

inline QParameters QParameters::asep_log(int twice_j, double log_q) {
  detail::check_log_q(log_q);
  if (twice_j < 1) throw DomainError("ASEP spin must satisfy 2j >= 1");
  if (twice_j > 254) throw DomainError("ASEP spin too large (2j <= 254)");
  QParameters p;
  p.model = Model::asep;
  p.log_q = log_q;
  p.q = std::exp(log_q);
  p.twice_spin = twice_j;
  p.spin = 0.5 * twice_j;
  p.nu = drift_constant_log(p.spin, log_q);
  return p;
}

inline QParameters QParameters::asep(int twice_j, double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("q must lie in (0,1)");
  auto p = asep_log(twice_j, std::log(q));
  p.q = q;
  return p;
}

inline QParameters QParameters::asip_log(double k, double log_q) {
  detail::check_log_q(log_q);
  if (!(k > 0.0) || !std::isfinite(k)) throw DomainError("ASIP spin must satisfy k > 0");
  QParameters p;
  p.model = Model::asip;
  p.log_q = log_q;
  p.q = std::exp(log_q);
  p.twice_spin = 0;
  p.spin = k;
  p.nu = drift_constant_log(k, log_q);
  return p;
}

inline QParameters QParameters::asip(double k, double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("q must lie in (0,1)");
  auto p = asip_log(k, std::log(q));
  p.q = q;
  return p;
}

/// Weak asymmetry scaling q = exp(-sqrt(eps)), eps_j = 2 j eps.
struct ScalingParameters {
  double epsilon = 0.01;
  double q_eps = 0.0;
  double eps_j = 0.0;
};

inline constexpr double kMinEpsilon = 1e-8;
inline constexpr double kMaxEpsilon = 0.5;

/// `spin` is j (ASEP, must be a half integer) or k (ASIP).
inline std::pair<QParameters, ScalingParameters> weak_asymmetry(double epsilon, double spin,
                                                                Model model) {
  if (!(epsilon >= kMinEpsilon && epsilon <= kMaxEpsilon))
    throw DomainError("epsilon outside the supported range [1e-8, 0.5]");
  const double log_q = -std::sqrt(epsilon);
  QParameters p;
  if (model == Model::asep) {
    const double twice = 2.0 * spin;
    if (twice != std::round(twice)) throw DomainError("ASEP spin must be a half integer");
    p = QParameters::asep_log(static_cast<int>(twice), log_q);
  } else {
    p = QParameters::asip_log(spin, log_q);
  }
  ScalingParameters s;
  s.epsilon = epsilon;
  s.q_eps = p.q;
  s.eps_j = 2.0 * p.spin * epsilon;
  return {p, s};
}

} // namespace qkpz
