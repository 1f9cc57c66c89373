#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rfslam/common.hpp"
#include "rfslam/geometry.hpp"
#include "rfslam/rng.hpp"
#include "rfslam/signal.hpp"

namespace rfslam {

struct AgentState {
  Vec2 position;
  Vec2 velocity;
};

/// Hypothesized map feature sample: position plus the Swerling-1 intensity
/// (variance of the path's complex amplitude).
struct FeatureParticle {
  Vec2 position;
  double intensity = 0.0;  // >= 0
};

// New features draw their intensity uniformly from [0, kBirthIntensityMax].
inline constexpr double kBirthIntensityMax = 2.0;

/// Dynamic-model and filter parameters.
struct ModelConfig {
  double agent_accel_var = 1e-4;   // driving noise, m^2/s^4 acting over one step
  double step_dt = 1.0;            // s
  double pa_walk_var = 1e-8;       // anchor position walk, m^2
  double va_walk_var = 9e-6;       // virtual anchor position walk, m^2
  double intensity_walk_var = 1e-4;
  double survival_prob = 0.999;
  double birth_prob = 1e-4;        // existence probability of each new feature
  double noise_shape = 10.0;       // Gamma shape of the noise-variance dynamics
  double declare_threshold = 0.5;
  double prune_threshold = 1e-2;
  double proposal_threshold_factor = 10.0;  // amplitude gate factor over noise

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string("ModelConfig: ") + name + " must be > 0");
    };
    auto unit = [](double v, const char* name) {
      if (!(v > 0.0) || !(v < 1.0)) {
        throw ConfigError(std::string("ModelConfig: ") + name + " must be in (0, 1)");
      }
    };
    positive(agent_accel_var, "agent_accel_var");
    positive(step_dt, "step_dt");
    positive(pa_walk_var, "pa_walk_var");
    positive(va_walk_var, "va_walk_var");
    positive(intensity_walk_var, "intensity_walk_var");
    positive(noise_shape, "noise_shape");
    positive(proposal_threshold_factor, "proposal_threshold_factor");
    unit(survival_prob, "survival_prob");
    unit(birth_prob, "birth_prob");
    unit(declare_threshold, "declare_threshold");
    unit(prune_threshold, "prune_threshold");
  }
};

/// Constant-velocity transition: driving noise enters as an acceleration held
/// over one step.
inline AgentState agent_transition_sample(const AgentState& x, const ModelConfig& cfg,
                                          Rng& rng) {
  const double sigma = std::sqrt(cfg.agent_accel_var);
  const Vec2 w = sigma > 0.0 ? Vec2(rng.normal(0.0, sigma), rng.normal(0.0, sigma))
                             : Vec2(0.0, 0.0);
  AgentState out;
  out.position = x.position + cfg.step_dt * x.velocity + 0.5 * cfg.step_dt * cfg.step_dt * w;
  out.velocity = x.velocity + cfg.step_dt * w;
  return out;
}

/// Random-walk transition for a feature. The intensity walk is truncated at
/// zero by rejection, since a negative intensity has no meaning.
inline FeatureParticle pf_transition_sample(const FeatureParticle& phi, bool is_pa,
                                            const ModelConfig& cfg, Rng& rng) {
  const double pos_sigma = std::sqrt(is_pa ? cfg.pa_walk_var : cfg.va_walk_var);
  const double int_sigma = std::sqrt(cfg.intensity_walk_var);
  FeatureParticle out;
  out.position = phi.position;
  if (pos_sigma > 0.0) {
    out.position += Vec2(rng.normal(0.0, pos_sigma), rng.normal(0.0, pos_sigma));
  }
  if (int_sigma == 0.0) {
    out.intensity = phi.intensity;
  } else {
    do {
      out.intensity = rng.normal(phi.intensity, int_sigma);
    } while (out.intensity < 0.0);
  }
  return out;
}

/// Gamma noise-variance transition with mean eta and variance eta^2 / shape.
inline double noise_var_transition_sample(double eta, const ModelConfig& cfg, Rng& rng) {
  if (!(eta > 0.0)) throw std::invalid_argument("noise_var_transition_sample: eta must be > 0");
  double out = 0.0;
  do {
    out = rng.gamma(cfg.noise_shape, eta / cfg.noise_shape);
  } while (!(out > 0.0));
  return out;
}

/// True when p lies in the m-th annular birth cell around the agent,
/// (m-1) * tau_step <= ||p - agent|| / c <= m * tau_step. Cells are 1-based;
/// boundary points belong to both adjacent cells.
inline bool birth_cell_contains(int m, const Vec2& agent_p, const Vec2& p,
                                const SignalSpec& spec) {
  const double delay = (p - agent_p).norm() / kSpeedOfLight;
  return (m - 1) * spec.tau_step <= delay && delay <= m * spec.tau_step;
}

/// Existence probability mu / (mu + 1) of a new feature whose cell holds a
/// Poisson-distributed number of births with mean mu.
inline double birth_existence_prob(double mu) {
  if (mu < 0.0) throw std::invalid_argument("birth_existence_prob: mu must be >= 0");
  return mu / (mu + 1.0);
}

/// Draws a new feature uniformly over the m-th annular cell (area-correct:
/// radius density proportional to r) with intensity uniform on
/// [0, kBirthIntensityMax].
inline FeatureParticle birth_sample(int m, const Vec2& agent_p, const SignalSpec& spec,
                                    Rng& rng) {
  const double r_inner = (m - 1) * spec.tau_step * kSpeedOfLight;
  const double r_outer = m * spec.tau_step * kSpeedOfLight;
  const double u = rng.uniform(0.0, 1.0);
  const double radius = std::sqrt(r_inner * r_inner + u * (r_outer * r_outer - r_inner * r_inner));
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  FeatureParticle out;
  out.position = agent_p + radius * Vec2(std::cos(angle), std::sin(angle));
  out.intensity = rng.uniform(0.0, kBirthIntensityMax);
  return out;
}

}  // namespace rfslam
