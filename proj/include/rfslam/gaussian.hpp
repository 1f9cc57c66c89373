#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "rfslam/common.hpp"

namespace rfslam {

/// log CN(z; 0, C) = -z^H C^{-1} z - M log(pi) - log det(C) from a
/// precomputed Cholesky factor.
inline double log_complex_gaussian(const Eigen::VectorXcd& z,
                                   const Eigen::LLT<Eigen::MatrixXcd>& chol) {
  if (chol.info() != Eigen::Success) {
    throw NumericalError("log_complex_gaussian: covariance not positive definite");
  }
  const auto& factor = chol.matrixLLT();
  const Eigen::VectorXcd y = chol.matrixL().solve(z);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < factor.rows(); ++i) {
    log_det += std::log(factor(i, i).real());
  }
  return -y.squaredNorm() - static_cast<double>(z.size()) * std::log(std::numbers::pi) -
         2.0 * log_det;
}

/// log CN(z; 0, C) for a Hermitian positive-definite C (lower triangle read).
inline double log_complex_gaussian(const Eigen::VectorXcd& z, const Eigen::MatrixXcd& cov) {
  Eigen::LLT<Eigen::MatrixXcd> chol(cov);
  return log_complex_gaussian(z, chol);
}

/// Normalizes exp(logw) to sum one with max subtraction, so the result
/// matches direct evaluation whenever that does not underflow. Entries of
/// -inf map to weight zero. Throws when every entry carries no mass.
inline std::vector<double> normalized_from_log(const std::vector<double>& logw) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double lw : logw) peak = std::max(peak, lw);
  if (!std::isfinite(peak)) {
    throw DegeneracyError("normalized_from_log: all weights vanished");
  }
  std::vector<double> out(logw.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    out[i] = std::exp(logw[i] - peak);
    total += out[i];
  }
  for (double& w : out) w /= total;
  return out;
}

}  // namespace rfslam
