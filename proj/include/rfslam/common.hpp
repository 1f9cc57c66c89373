#pragma once

#include <stdexcept>

namespace rfslam {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

/// A particle update collapsed to zero total weight. Aborts the run rather
/// than silently reinitializing, so model mis-specification surfaces in tests.
struct DegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite inputs or a covariance that lost positive definiteness.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent scenario configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rfslam
