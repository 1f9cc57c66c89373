#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "rfslam/beliefs.hpp"
#include "rfslam/common.hpp"
#include "rfslam/gaussian.hpp"
#include "rfslam/rng.hpp"
#include "rfslam/signal.hpp"
#include "rfslam/state.hpp"

namespace rfslam {

/// Per-feature pieces of the moment-matched signal covariance, computed once
/// per step and shared by the agent, feature, and noise weight updates. The
/// per-particle rank-one factors are kept as (intensity, delay) pairs plus the
/// cached contribution vectors, never as dense per-particle matrices.
struct FeatureCovTerms {
  double existence_mass = 0.0;     // sum of predicted feature weights
  Eigen::VectorXd intensities;     // per stacked particle
  Eigen::VectorXd delays;          // per stacked particle, seconds
  Eigen::MatrixXcd h;              // M x P contribution vectors at stacked pairs
  Eigen::MatrixXcd marginal_cov;   // agent- and existence-averaged outer product
};

struct CovTerms {
  std::vector<FeatureCovTerms> features;
  double mean_noise_var = 0.0;     // mean of the predicted noise-variance belief
};

/// Propagates every belief one step forward: agent and noise particles move
/// with weights unchanged, legacy feature particles move with weights scaled
/// by the survival probability. New features are not created here.
inline void predict_step(Beliefs& b, const ModelConfig& cfg, const StreamKey& key) {
  Rng agent_rng = key.child(kStreamPredictAgent).stream();
  for (AgentState& x : b.agent.particles) {
    x = agent_transition_sample(x, cfg, agent_rng);
  }
  for (std::size_t j = 0; j < b.noise.size(); ++j) {
    Rng rng = key.child(kStreamPredictNoise, j).stream();
    for (double& eta : b.noise[j].particles) {
      eta = noise_var_transition_sample(eta, cfg, rng);
    }
  }
  for (std::size_t j = 0; j < b.features.size(); ++j) {
    for (std::size_t n = 0; n < b.features[j].size(); ++n) {
      FeatureBelief& f = b.features[j][n];
      Rng rng = key.child(kStreamPredictFeature, j, n).stream();
      for (FeatureParticle& phi : f.particles) {
        phi = pf_transition_sample(phi, f.is_pa, cfg, rng);
      }
      for (double& w : f.weights) w *= cfg.survival_prob;
    }
  }
}

/// Detects candidate new features in one received snapshot. A delay bin
/// proposes a feature when its matched-filter output is a strict local
/// maximum whose amplitude estimate |z~_m| / ||h||^2 exceeds
/// sqrt(threshold_factor * noise_var_estimate), and the bin delay falls
/// outside the spread of agent-to-anchor particle distances. Each proposal
/// is born index-paired with the agent particles, with total existence mass
/// birth_prob.
inline std::vector<FeatureBelief> propose_new_pfs(const Eigen::VectorXcd& z,
                                                  const AgentBelief& agent,
                                                  const FeatureBelief& pa_feature,
                                                  double noise_var_estimate,
                                                  const SignalSpec& spec,
                                                  const ModelConfig& cfg,
                                                  const StreamKey& key) {
  if (!(noise_var_estimate > 0.0)) {
    throw NumericalError("propose_new_pfs: noise variance estimate must be > 0");
  }
  const Eigen::VectorXd spectrum = matched_filter_spectrum(z, spec);
  const double gate =
      std::sqrt(noise_var_estimate * cfg.proposal_threshold_factor) * spec.pulse_energy;

  const std::size_t count = agent.size();
  double dist_min = std::numeric_limits<double>::infinity();
  double dist_max = 0.0;
  for (std::size_t p = 0; p < count; ++p) {
    const double d = (agent.particles[p].position - pa_feature.particles[p].position).norm();
    dist_min = std::min(dist_min, d);
    dist_max = std::max(dist_max, d);
  }

  std::vector<FeatureBelief> proposals;
  const int m_count = spec.sample_count;
  for (int bin = 0; bin < m_count; ++bin) {
    const double value = spectrum[bin];
    if (value <= gate) continue;
    if (bin > 0 && !(value > spectrum[bin - 1])) continue;
    if (bin + 1 < m_count && !(value > spectrum[bin + 1])) continue;
    const double bin_distance = bin * spec.tau_step * kSpeedOfLight;
    if (bin_distance >= dist_min && bin_distance <= dist_max) continue;

    FeatureBelief born;
    born.is_pa = false;
    born.particles.resize(count);
    born.weights.assign(count, cfg.birth_prob / static_cast<double>(count));
    Rng rng = key.child(static_cast<std::uint64_t>(bin)).stream();
    for (std::size_t p = 0; p < count; ++p) {
      born.particles[p] = birth_sample(bin + 1, agent.particles[p].position, spec, rng);
    }
    proposals.push_back(std::move(born));
  }
  return proposals;
}

/// Builds the covariance terms shared by all weight updates for one anchor:
/// the per-particle rank-one factors, each feature's marginal covariance
/// contribution, and the mean predicted noise variance.
inline CovTerms compute_cov_terms(const AgentBelief& agent,
                                  const std::vector<FeatureBelief>& features,
                                  const NoiseBelief& noise, const SignalSpec& spec) {
  const std::size_t count = agent.size();
  const int m_count = spec.sample_count;
  CovTerms out;
  out.mean_noise_var = noise.mean();
  out.features.resize(features.size());
  for (std::size_t n = 0; n < features.size(); ++n) {
    const FeatureBelief& f = features[n];
    FeatureCovTerms& terms = out.features[n];
    terms.existence_mass = f.existence();
    terms.intensities.resize(count);
    terms.delays.resize(count);
    terms.h.resize(m_count, count);
    terms.marginal_cov = Eigen::MatrixXcd::Zero(m_count, m_count);
    for (std::size_t p = 0; p < count; ++p) {
      const double delay =
          (agent.particles[p].position - f.particles[p].position).norm() / kSpeedOfLight;
      const double intensity = f.particles[p].intensity;
      if (!std::isfinite(delay) || !std::isfinite(intensity)) {
        throw NumericalError("compute_cov_terms: non-finite delay or intensity");
      }
      terms.delays[p] = delay;
      terms.intensities[p] = intensity;
      contribution_into(delay, spec, terms.h.col(p));
      const double scale = agent.weights[p] * terms.existence_mass * intensity;
      if (scale != 0.0) {
        terms.marginal_cov.selfadjointView<Eigen::Lower>().rankUpdate(terms.h.col(p), scale);
      }
    }
    terms.marginal_cov.triangularView<Eigen::StrictlyUpper>() =
        terms.marginal_cov.adjoint();
  }
  return out;
}

/// Signal covariance conditioned on agent particle p, features marginalized:
/// mean_noise_var * I + sum_n existence_mass_n * intensity_n^(p) * h h^H.
inline void assemble_agent_cov(const CovTerms& cov, std::size_t p, Eigen::MatrixXcd& out) {
  const Eigen::Index m = cov.features.empty() ? out.rows() : cov.features.front().h.rows();
  out.setZero(m, m);
  out.diagonal().array() = cov.mean_noise_var;
  for (const FeatureCovTerms& f : cov.features) {
    const double scale = f.existence_mass * f.intensities[p];
    if (scale != 0.0) out.selfadjointView<Eigen::Lower>().rankUpdate(f.h.col(p), scale);
  }
  out.triangularView<Eigen::StrictlyUpper>() = out.adjoint();
}

/// Signal covariance seen by feature n when it does not exist: every other
/// feature's marginal contribution plus noise.
inline void assemble_feature_base_cov(const CovTerms& cov, std::size_t n,
                                      Eigen::MatrixXcd& out) {
  const Eigen::Index m = cov.features[n].h.rows();
  out.setZero(m, m);
  out.diagonal().array() = cov.mean_noise_var;
  for (std::size_t k = 0; k < cov.features.size(); ++k) {
    if (k != n) out += cov.features[k].marginal_cov;
  }
}

/// Signal covariance seen by feature n's particle p with existence bit set.
inline void assemble_feature_cov(const CovTerms& cov, std::size_t n, std::size_t p,
                                 bool exists, Eigen::MatrixXcd& out) {
  assemble_feature_base_cov(cov, n, out);
  if (exists) {
    const FeatureCovTerms& f = cov.features[n];
    if (f.intensities[p] != 0.0) {
      out.selfadjointView<Eigen::Lower>().rankUpdate(f.h.col(p), f.intensities[p]);
      out.triangularView<Eigen::StrictlyUpper>() = out.adjoint();
    }
  }
}

/// Signal covariance conditioned on one noise-variance particle.
inline void assemble_noise_cov(const CovTerms& cov, double noise_var, Eigen::MatrixXcd& out) {
  const Eigen::Index m = cov.features.empty() ? out.rows() : cov.features.front().h.rows();
  out.setZero(m, m);
  out.diagonal().array() = noise_var;
  for (const FeatureCovTerms& f : cov.features) out += f.marginal_cov;
}

/// Reweights the agent particles by the product over anchors of the
/// moment-matched likelihoods, evaluated in the log domain.
inline void agent_weight_update(const std::vector<Eigen::VectorXcd>& signals,
                                AgentBelief& agent, const std::vector<CovTerms>& covs,
                                const SignalSpec& spec) {
  const std::size_t count = agent.size();
  std::vector<double> logw(count);
  Eigen::MatrixXcd work(spec.sample_count, spec.sample_count);
  Eigen::LLT<Eigen::MatrixXcd> chol;
  for (std::size_t p = 0; p < count; ++p) {
    double lw = std::log(agent.weights[p]);
    for (std::size_t j = 0; j < covs.size(); ++j) {
      assemble_agent_cov(covs[j], p, work);
      chol.compute(work);
      lw += log_complex_gaussian(signals[j], chol);
    }
    logw[p] = lw;
  }
  agent.weights = normalized_from_log(logw);
}

/// Reweights one feature belief. The normalization adds the constant
/// non-existence term, so the resulting weight sum is the posterior
/// existence probability.
inline void pf_weight_update(const Eigen::VectorXcd& z, FeatureBelief& feature,
                             const CovTerms& cov, std::size_t n, const SignalSpec& spec) {
  const std::size_t count = feature.particles.size();
  const FeatureCovTerms& terms = cov.features[n];
  const double existence_mass = terms.existence_mass;

  Eigen::MatrixXcd base(spec.sample_count, spec.sample_count);
  assemble_feature_base_cov(cov, n, base);
  const double log_absent = log_complex_gaussian(z, base);

  std::vector<double> logw(count);
  Eigen::MatrixXcd work(spec.sample_count, spec.sample_count);
  Eigen::LLT<Eigen::MatrixXcd> chol;
  for (std::size_t p = 0; p < count; ++p) {
    work.triangularView<Eigen::Lower>() = base;
    if (terms.intensities[p] != 0.0) {
      work.selfadjointView<Eigen::Lower>().rankUpdate(terms.h.col(p), terms.intensities[p]);
    }
    chol.compute(work);
    logw[p] = std::log(feature.weights[p]) + log_complex_gaussian(z, chol);
  }

  const double log_absent_term = log_absent + std::log1p(-existence_mass);
  double peak = log_absent_term;
  for (double lw : logw) peak = std::max(peak, lw);
  if (!std::isfinite(peak)) {
    throw DegeneracyError("pf_weight_update: all weights vanished");
  }
  double denom = std::isfinite(log_absent_term) ? std::exp(log_absent_term - peak) : 0.0;
  std::vector<double> shifted(count);
  for (std::size_t p = 0; p < count; ++p) {
    shifted[p] = std::isfinite(logw[p]) ? std::exp(logw[p] - peak) : 0.0;
    denom += shifted[p];
  }
  for (std::size_t p = 0; p < count; ++p) feature.weights[p] = shifted[p] / denom;
}

/// Reweights the noise-variance particles against the total feature
/// contribution.
inline void noise_weight_update(const Eigen::VectorXcd& z, NoiseBelief& noise,
                                const CovTerms& cov, const SignalSpec& spec) {
  Eigen::MatrixXcd total = Eigen::MatrixXcd::Zero(spec.sample_count, spec.sample_count);
  for (const FeatureCovTerms& f : cov.features) total += f.marginal_cov;

  const std::size_t count = noise.particles.size();
  std::vector<double> logw(count);
  Eigen::MatrixXcd work(spec.sample_count, spec.sample_count);
  Eigen::LLT<Eigen::MatrixXcd> chol;
  for (std::size_t p = 0; p < count; ++p) {
    work = total;
    work.diagonal().array() += noise.particles[p];
    chol.compute(work);
    logw[p] = std::log(noise.weights[p]) + log_complex_gaussian(z, chol);
  }
  noise.weights = normalized_from_log(logw);
}

namespace detail {

inline std::vector<std::size_t> systematic_indices(const std::vector<double>& weights,
                                                   double total, Rng& rng) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> idx(n);
  const double offset = rng.uniform(0.0, 1.0);
  double cumulative = weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = (static_cast<double>(i) + offset) * total / static_cast<double>(n);
    while (cumulative < target && j + 1 < n) {
      ++j;
      cumulative += weights[j];
    }
    idx[i] = j;
  }
  return idx;
}

template <typename Particle>
void systematic_resample(std::vector<Particle>& particles, std::vector<double>& weights,
                         Rng& rng, const char* what) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DegeneracyError(std::string(what) + ": zero total weight in resampling");
  }
  const std::vector<std::size_t> idx = systematic_indices(weights, total, rng);
  std::vector<Particle> next(particles.size());
  for (std::size_t i = 0; i < idx.size(); ++i) next[i] = particles[idx[i]];
  particles = std::move(next);
  weights.assign(weights.size(), total / static_cast<double>(weights.size()));
}

}  // namespace detail

inline void resample_agent(AgentBelief& agent, Rng& rng) {
  detail::systematic_resample(agent.particles, agent.weights, rng, "agent");
}

/// Systematic resampling of a feature belief; the uniform weights keep the
/// existence mass unchanged.
inline void resample_feature(FeatureBelief& feature, Rng& rng) {
  detail::systematic_resample(feature.particles, feature.weights, rng, "feature");
}

/// Noise beliefs are resampled only when the effective sample size drops
/// below half the particle count.
inline void maybe_resample_noise(NoiseBelief& noise, Rng& rng) {
  if (noise.effective_sample_size() < 0.5 * static_cast<double>(noise.particles.size())) {
    detail::systematic_resample(noise.particles, noise.weights, rng, "noise");
  }
}

struct FeatureEstimate {
  int pa_index = 0;       // 0-based anchor index
  int feature_index = 0;  // 1-based slot at declaration time; 1 is the anchor
  bool is_pa = false;
  Vec2 position = Vec2::Zero();
  double intensity = 0.0;
  double existence = 0.0;
};

struct StepEstimates {
  AgentState agent;
  std::vector<FeatureEstimate> features;  // declared features only
  std::vector<double> noise_var;          // per anchor
};

/// Declares features above the declaration threshold, forms the minimum
/// mean-square-error estimates, prunes low-existence features (never the
/// anchor itself), and refreshes the per-anchor noise-variance estimates.
inline StepEstimates declare_estimate_prune(Beliefs& b, const ModelConfig& cfg) {
  StepEstimates out;
  out.agent.position.setZero();
  out.agent.velocity.setZero();
  for (std::size_t p = 0; p < b.agent.size(); ++p) {
    out.agent.position += b.agent.weights[p] * b.agent.particles[p].position;
    out.agent.velocity += b.agent.weights[p] * b.agent.particles[p].velocity;
  }

  for (std::size_t j = 0; j < b.features.size(); ++j) {
    for (std::size_t n = 0; n < b.features[j].size(); ++n) {
      const FeatureBelief& f = b.features[j][n];
      const double existence = f.existence();
      if (existence > cfg.declare_threshold) {
        FeatureEstimate est;
        est.pa_index = static_cast<int>(j);
        est.feature_index = static_cast<int>(n) + 1;
        est.is_pa = f.is_pa;
        Vec2 position = Vec2::Zero();
        double intensity = 0.0;
        for (std::size_t p = 0; p < f.particles.size(); ++p) {
          position += f.weights[p] * f.particles[p].position;
          intensity += f.weights[p] * f.particles[p].intensity;
        }
        est.position = position / existence;
        est.intensity = intensity / existence;
        est.existence = existence;
        out.features.push_back(est);
      }
    }
    auto& list = b.features[j];
    list.erase(std::remove_if(list.begin() + 1, list.end(),
                              [&](const FeatureBelief& f) {
                                return f.existence() < cfg.prune_threshold;
                              }),
               list.end());
  }

  out.noise_var.resize(b.noise.size());
  for (std::size_t j = 0; j < b.noise.size(); ++j) {
    out.noise_var[j] = b.noise[j].mean();
    b.noise_var_estimate[j] = out.noise_var[j];
  }
  return out;
}

/// One full filter step: prediction, new-feature proposals, covariance
/// preparation, the three weight updates, resampling, and declaration with
/// pruning. Messages flow forward in time only and are computed once.
inline StepEstimates step(Beliefs& b, const std::vector<Eigen::VectorXcd>& signals,
                          const ModelConfig& cfg, const SignalSpec& spec,
                          const StreamKey& key) {
  const std::size_t anchors = b.features.size();
  if (signals.size() != anchors) {
    throw std::invalid_argument("step: one signal snapshot per anchor required");
  }

  predict_step(b, cfg, key);

  for (std::size_t j = 0; j < anchors; ++j) {
    std::vector<FeatureBelief> born =
        propose_new_pfs(signals[j], b.agent, b.features[j][0], b.noise_var_estimate[j],
                        spec, cfg, key.child(kStreamBirth, j));
    for (FeatureBelief& f : born) b.features[j].push_back(std::move(f));
  }

  std::vector<CovTerms> covs(anchors);
  for (std::size_t j = 0; j < anchors; ++j) {
    covs[j] = compute_cov_terms(b.agent, b.features[j], b.noise[j], spec);
  }

  agent_weight_update(signals, b.agent, covs, spec);
  for (std::size_t j = 0; j < anchors; ++j) {
    for (std::size_t n = 0; n < b.features[j].size(); ++n) {
      pf_weight_update(signals[j], b.features[j][n], covs[j], n, spec);
    }
    noise_weight_update(signals[j], b.noise[j], covs[j], spec);
  }

  Rng agent_rng = key.child(kStreamResampleAgent).stream();
  resample_agent(b.agent, agent_rng);
  for (std::size_t j = 0; j < anchors; ++j) {
    for (std::size_t n = 0; n < b.features[j].size(); ++n) {
      Rng rng = key.child(kStreamResampleFeature, j, n).stream();
      resample_feature(b.features[j][n], rng);
    }
    Rng rng = key.child(kStreamResampleNoise, j).stream();
    maybe_resample_noise(b.noise[j], rng);
  }

  return declare_estimate_prune(b, cfg);
}

}  // namespace rfslam
