#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rfslam/geometry.hpp"

namespace rfslam {

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method
/// with potentials, O(n^3)).
inline double hungarian_assign(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (n == 0) return 0.0;
  if (cost.cols() != n) throw std::invalid_argument("hungarian_assign: matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = match[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost(match[j] - 1, j - 1);
  return total;
}

/// Generalized optimal sub-pattern assignment metric between point sets, with
/// the standard cardinality penalty (alpha = 2): localization cost
/// min(d, cutoff)^order per matched pair plus cutoff^order / 2 per missed or
/// false point, minimized over assignments and taken to the 1/order power.
inline double gospa(const std::vector<Vec2>& estimates, const std::vector<Vec2>& truth,
                    double cutoff, double order) {
  if (!(cutoff > 0.0)) throw std::invalid_argument("gospa: cutoff must be > 0");
  if (!(order >= 1.0)) throw std::invalid_argument("gospa: order must be >= 1");
  const std::size_t n = truth.size();
  const std::size_t m = estimates.size();
  if (n == 0 && m == 0) return 0.0;
  const double unassigned = std::pow(cutoff, order) / 2.0;
  const double forbidden = 1e30;
  const std::size_t size = n + m;
  Eigen::MatrixXd cost(size, size);
  cost.setConstant(forbidden);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      cost(i, j) = std::pow(std::min((truth[i] - estimates[j]).norm(), cutoff), order);
    }
    cost(i, m + i) = unassigned;
  }
  for (std::size_t j = 0; j < m; ++j) {
    cost(n + j, j) = unassigned;
    for (std::size_t i = 0; i < n; ++i) cost(n + j, m + i) = 0.0;
  }
  return std::pow(hungarian_assign(cost), 1.0 / order);
}

/// Per-step root-mean-square position error over runs of equal length.
inline std::vector<double> rmse_per_step(const std::vector<std::vector<double>>& run_errors) {
  if (run_errors.empty()) throw std::invalid_argument("rmse_per_step: no runs");
  const std::size_t steps = run_errors.front().size();
  for (const auto& run : run_errors) {
    if (run.size() != steps) throw std::invalid_argument("rmse_per_step: unequal run lengths");
  }
  std::vector<double> out(steps, 0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    double sum_sq = 0.0;
    for (const auto& run : run_errors) sum_sq += run[k] * run[k];
    out[k] = std::sqrt(sum_sq / static_cast<double>(run_errors.size()));
  }
  return out;
}

struct TrackLoss {
  bool lost = false;
  std::size_t onset = 0;
};

/// A run loses the track when the error exceeds the threshold at some step
/// and keeps growing: the mean over the final `window` steps must exceed the
/// mean over the `window` steps following the first crossing.
inline TrackLoss detect_track_loss(const std::vector<double>& errors, double threshold = 1.0,
                                   std::size_t window = 20) {
  std::size_t onset = errors.size();
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (errors[k] > threshold) {
      onset = k;
      break;
    }
  }
  if (onset == errors.size()) return {false, 0};
  const std::size_t steps = errors.size();
  const std::size_t after_begin = std::min(onset + 1, steps - 1);
  const std::size_t after_end = std::min(after_begin + window, steps);
  double after_mean = 0.0;
  for (std::size_t k = after_begin; k < after_end; ++k) after_mean += errors[k];
  after_mean /= static_cast<double>(after_end - after_begin);
  const std::size_t tail_begin = steps > window ? steps - window : 0;
  double tail_mean = 0.0;
  for (std::size_t k = tail_begin; k < steps; ++k) tail_mean += errors[k];
  tail_mean /= static_cast<double>(steps - tail_begin);
  return {tail_mean > after_mean, onset};
}

/// Right-continuous empirical CDF as sorted (value, fraction <= value) pairs,
/// one pair per distinct value.
inline std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("empirical_cdf: empty input");
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> out;
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 == values.size() || values[i + 1] != values[i]) {
      out.emplace_back(values[i], static_cast<double>(i + 1) / n);
    }
  }
  return out;
}

}  // namespace rfslam
