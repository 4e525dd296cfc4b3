#pragma once

// Reference values computed independently of the library code paths.

#include <cmath>
#include <numbers>

namespace oracle {

/// [n]_q = (q^n - q^-n)/(q - q^-1), long double.
inline long double q_number(long double n, long double q) {
  return (std::pow(q, n) - std::pow(q, -n)) / (q - 1.0L / q);
}

/// e^{-t} I_|x|(t) by its power series in long double.
inline long double bessel_kernel(long double t, long x) {
  x = std::labs(x);
  if (t == 0.0L) return x == 0 ? 1.0L : 0.0L;
  const long double h = t / 2.0L;
  long double term = std::exp(static_cast<long double>(x) * std::log(h) - std::lgamma(static_cast<long double>(x) + 1.0L) - t);
  long double sum = 0.0L;
  for (long k = 0; k < 100000; ++k) {
    sum += term;
    term *= h * h / ((k + 1.0L) * (k + 1.0L + x));
    if (k > h && term < 1e-24L * sum) break;
  }
  return sum;
}

/// Uncentred ASEP(q,j) rates with the 1/(2[2j]) prefactor: a particle at x
/// (count n) jumps right / left given count m at x+1.
struct Rates {
  long double plus, minus;
};

inline Rates asep_uncentred(int n, int m, long double twice_j, long double q) {
  const long double pref = 1.0L / (2.0L * q_number(twice_j, q));
  return {pref * std::pow(q, n - m - twice_j - 1.0L) * q_number(n, q) * q_number(twice_j - m, q),
          pref * std::pow(q, n - m + twice_j + 1.0L) * q_number(twice_j - n, q) * q_number(m, q)};
}

/// Uncentred ASIP(q,k): j -> -k in the ASEP expression.
inline Rates asip_uncentred(int n, int m, long double k, long double q) {
  const long double pref = 1.0L / (2.0L * q_number(2.0L * k, q));
  return {pref * std::pow(q, n - m + 2.0L * k - 1.0L) * q_number(n, q) * q_number(2.0L * k + m, q),
          pref * std::pow(q, n - m - 2.0L * k + 1.0L) * q_number(2.0L * k + n, q) * q_number(m, q)};
}

/// E Z_T(X)^2 for flat data of the SHE on R: 2 e^{T/4} Phi(sqrt(T/2)).
inline double she_flat_second_moment(double T) {
  const double phi = 0.5 * std::erfc(-std::sqrt(T / 2.0) / std::numbers::sqrt2);
  return 2.0 * std::exp(T / 4.0) * phi;
}

inline double gaussian(double T, double X) {
  return std::exp(-X * X / (2.0 * T)) / std::sqrt(2.0 * std::numbers::pi * T);
}

} // namespace oracle
