#pragma once

#include <stdexcept>
#include <string>

namespace qkpz {

/// Parameter outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Site, bond or macroscopic coordinate outside the simulated window.
class RangeError : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

/// A rate, a field value or an exponent left the representable range.
class OverflowError : public std::overflow_error {
public:
  using std::overflow_error::overflow_error;
};

/// Jump budget or occupancy cap exhausted.
class BudgetError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Ensemble too small for the requested statistic.
class StatisticalPowerError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Numerical quadrature or truncation could not reach its tolerance.
class QuadratureError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace qkpz
