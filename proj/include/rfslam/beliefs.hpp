#pragma once

#include <numeric>
#include <vector>

#include "rfslam/state.hpp"

namespace rfslam {

/// Weighted-particle posterior of the agent state. Weights sum to one after
/// every measurement update.
struct AgentBelief {
  std::vector<AgentState> particles;
  std::vector<double> weights;

  std::size_t size() const { return particles.size(); }
};

/// Weighted-particle posterior of one potential feature. Particles are paired
/// index-wise with the agent particles (joint samples of agent and feature),
/// and the weight sum is the feature's existence probability.
struct FeatureBelief {
  bool is_pa = false;
  std::vector<FeatureParticle> particles;
  std::vector<double> weights;

  double existence() const {
    return std::accumulate(weights.begin(), weights.end(), 0.0);
  }
};

/// Weighted-particle posterior of one anchor's measurement noise variance.
struct NoiseBelief {
  std::vector<double> particles;
  std::vector<double> weights;

  double mean() const {
    double out = 0.0;
    for (std::size_t i = 0; i < particles.size(); ++i) out += weights[i] * particles[i];
    return out;
  }
  double effective_sample_size() const {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double w : weights) {
      sum += w;
      sum_sq += w * w;
    }
    return sum_sq > 0.0 ? sum * sum / sum_sq : 0.0;
  }
};

/// Full filter state: agent, per-anchor feature lists (index 0 is always the
/// anchor itself), per-anchor noise beliefs, and the latest noise-variance
/// estimates used to gate new-feature proposals.
struct Beliefs {
  AgentBelief agent;
  std::vector<std::vector<FeatureBelief>> features;  // [pa][n]
  std::vector<NoiseBelief> noise;                    // [pa]
  std::vector<double> noise_var_estimate;            // [pa]
};

}  // namespace rfslam
