#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfslam/common.hpp"
#include "rfslam/geometry.hpp"
#include "rfslam/signal.hpp"
#include "rfslam/state.hpp"

namespace rfslam {

struct TrajectoryConfig {
  std::vector<Vec2> positions;  // explicit per-step positions, or
  std::vector<Vec2> waypoints;  // polyline resampled at fixed spacing
  double spacing = 0.05;        // m between consecutive steps
  int step_count = 0;           // 0 = fill the whole polyline
};

struct InitConfig {
  double position_radius = 0.5;      // agent position prior disk, m
  double velocity_half_range = 0.01; // agent velocity prior, m/s per axis
  double intensity_max = 2.0;        // anchor intensity prior upper bound
  double noise_var_max = 0.1;        // noise-variance prior upper bound
};

struct MetricsConfig {
  bool exclude_lost_runs = true;
  double gospa_cutoff = 2.0;
  double gospa_order = 1.0;
  bool gospa_include_pa = true;
};

/// Complete description of one reproducible experiment.
struct ScenarioConfig {
  Environment environment;
  TrajectoryConfig trajectory;
  SignalSpec spec;
  AmplitudeModel amplitude;
  double noise_var_true = 6.309573444801933e-05;  // 10^-4.2
  ModelConfig model;
  int agent_particles = 10000;
  int noise_particles = 1000;
  InitConfig init;
  MetricsConfig metrics;
  int run_count = 1;
  std::uint64_t base_seed = 1;
};

namespace detail {

inline void require_keys(const nlohmann::json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& item : obj.items()) {
    if (!known.count(item.key())) {
      throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
    }
  }
}

inline Vec2 parse_point(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError("config: " + where + " must be a [x, y] pair");
  }
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

inline double get_number(const nlohmann::json& obj, const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw ConfigError("config: " + key + " must be a number");
  return obj[key].get<double>();
}

inline double require_positive(double value, const std::string& name) {
  if (!(value > 0.0)) throw ConfigError("config: " + name + " must be > 0");
  return value;
}

}  // namespace detail

inline ScenarioConfig config_from_json(const nlohmann::json& root) {
  using nlohmann::json;
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  detail::require_keys(root,
                       {"environment", "trajectory", "signal", "amplitude", "noise", "model",
                        "particles", "init", "metrics", "runs"},
                       "top level");
  if (!root.contains("environment") || !root.contains("trajectory")) {
    throw ConfigError("config: environment and trajectory sections are required");
  }

  ScenarioConfig cfg;

  const json& env = root["environment"];
  detail::require_keys(env, {"surfaces", "pa_positions"}, "environment");
  if (env.contains("surfaces")) {
    for (std::size_t i = 0; i < env["surfaces"].size(); ++i) {
      const json& s = env["surfaces"][i];
      detail::require_keys(s, {"a", "b", "reflection"}, "environment.surfaces");
      const Vec2 a = detail::parse_point(s.at("a"), "surface endpoint a");
      const Vec2 b = detail::parse_point(s.at("b"), "surface endpoint b");
      const double refl = detail::get_number(s, "reflection", 0.7);
      try {
        cfg.environment.surfaces.emplace_back(a, b, refl);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: environment.surfaces[") + std::to_string(i) +
                          "]: " + e.what());
      }
    }
  }
  if (!env.contains("pa_positions") || env["pa_positions"].empty()) {
    throw ConfigError("config: environment.pa_positions needs at least one anchor");
  }
  for (const json& p : env["pa_positions"]) {
    cfg.environment.pa_positions.push_back(detail::parse_point(p, "pa position"));
  }
  for (std::size_t j = 0; j < cfg.environment.pa_positions.size(); ++j) {
    for (const Surface& s : cfg.environment.surfaces) {
      if (detail::point_segment_distance(cfg.environment.pa_positions[j], s.a, s.b) <=
          kGeomTol) {
        throw ConfigError("config: pa_positions[" + std::to_string(j) + "] lies on a surface");
      }
    }
  }

  const json& traj = root["trajectory"];
  detail::require_keys(traj, {"positions", "waypoints", "spacing", "n_steps"}, "trajectory");
  if (traj.contains("positions")) {
    for (const json& p : traj["positions"]) {
      cfg.trajectory.positions.push_back(detail::parse_point(p, "trajectory position"));
    }
    if (cfg.trajectory.positions.empty()) {
      throw ConfigError("config: trajectory.positions must not be empty");
    }
  } else if (traj.contains("waypoints")) {
    for (const json& p : traj["waypoints"]) {
      cfg.trajectory.waypoints.push_back(detail::parse_point(p, "trajectory waypoint"));
    }
    if (cfg.trajectory.waypoints.size() < 2) {
      throw ConfigError("config: trajectory.waypoints needs at least two points");
    }
    cfg.trajectory.spacing =
        detail::require_positive(detail::get_number(traj, "spacing", 0.05), "trajectory.spacing");
    if (traj.contains("n_steps")) {
      cfg.trajectory.step_count = traj["n_steps"].get<int>();
      if (cfg.trajectory.step_count <= 0) {
        throw ConfigError("config: trajectory.n_steps must be > 0");
      }
    }
  } else {
    throw ConfigError("config: trajectory needs positions or waypoints");
  }

  double carrier = 6.0e9;
  double bandwidth = 3.0e8;
  double spacing = 1.0e7;
  if (root.contains("signal")) {
    const json& sig = root["signal"];
    detail::require_keys(sig, {"f_c", "bandwidth", "delta"}, "signal");
    carrier = detail::get_number(sig, "f_c", carrier);
    bandwidth = detail::get_number(sig, "bandwidth", bandwidth);
    spacing = detail::get_number(sig, "delta", spacing);
  }
  cfg.spec = SignalSpec::make(carrier, bandwidth, spacing);

  cfg.amplitude.carrier_freq = carrier;
  if (root.contains("amplitude")) {
    const json& amp = root["amplitude"];
    detail::require_keys(amp, {"pa_magnitude", "va_magnitude", "gain"}, "amplitude");
    cfg.amplitude.pa_magnitude = detail::get_number(amp, "pa_magnitude", 1.0);
    cfg.amplitude.va_magnitude = detail::get_number(amp, "va_magnitude", 0.7);
    cfg.amplitude.gain = detail::get_number(amp, "gain", 1.0);
    for (double a : {cfg.amplitude.pa_magnitude, cfg.amplitude.va_magnitude}) {
      if (!(a > 0.0) || a > 1.0) {
        throw ConfigError("config: amplitude magnitudes must be in (0, 1]");
      }
    }
    detail::require_positive(cfg.amplitude.gain, "amplitude.gain");
  }

  if (root.contains("noise")) {
    const json& noise = root["noise"];
    detail::require_keys(noise, {"eta_true"}, "noise");
    cfg.noise_var_true =
        detail::require_positive(detail::get_number(noise, "eta_true", cfg.noise_var_true),
                                 "noise.eta_true");
  }

  if (root.contains("model")) {
    const json& model = root["model"];
    detail::require_keys(model,
                         {"sigma_x2", "dt", "sigma_p_pa2", "sigma_p_va2", "sigma_gamma2",
                          "p_s", "p_b", "c_eta", "t_dec", "t_pru", "gamma_init_factor"},
                         "model");
    cfg.model.agent_accel_var = detail::get_number(model, "sigma_x2", cfg.model.agent_accel_var);
    cfg.model.step_dt = detail::get_number(model, "dt", cfg.model.step_dt);
    cfg.model.pa_walk_var = detail::get_number(model, "sigma_p_pa2", cfg.model.pa_walk_var);
    cfg.model.va_walk_var = detail::get_number(model, "sigma_p_va2", cfg.model.va_walk_var);
    cfg.model.intensity_walk_var =
        detail::get_number(model, "sigma_gamma2", cfg.model.intensity_walk_var);
    cfg.model.survival_prob = detail::get_number(model, "p_s", cfg.model.survival_prob);
    cfg.model.birth_prob = detail::get_number(model, "p_b", cfg.model.birth_prob);
    cfg.model.noise_shape = detail::get_number(model, "c_eta", cfg.model.noise_shape);
    cfg.model.declare_threshold = detail::get_number(model, "t_dec", cfg.model.declare_threshold);
    cfg.model.prune_threshold = detail::get_number(model, "t_pru", cfg.model.prune_threshold);
    cfg.model.proposal_threshold_factor =
        detail::get_number(model, "gamma_init_factor", cfg.model.proposal_threshold_factor);
  }
  cfg.model.validate();

  if (root.contains("particles")) {
    const json& particles = root["particles"];
    detail::require_keys(particles, {"agent", "noise"}, "particles");
    cfg.agent_particles =
        static_cast<int>(detail::get_number(particles, "agent", cfg.agent_particles));
    cfg.noise_particles =
        static_cast<int>(detail::get_number(particles, "noise", cfg.noise_particles));
    if (cfg.agent_particles <= 0 || cfg.noise_particles <= 0) {
      throw ConfigError("config: particle counts must be > 0");
    }
  }

  if (root.contains("init")) {
    const json& init = root["init"];
    detail::require_keys(init,
                         {"position_radius", "velocity_half_range", "intensity_max",
                          "noise_var_max"},
                         "init");
    cfg.init.position_radius = detail::require_positive(
        detail::get_number(init, "position_radius", cfg.init.position_radius),
        "init.position_radius");
    cfg.init.velocity_half_range = detail::require_positive(
        detail::get_number(init, "velocity_half_range", cfg.init.velocity_half_range),
        "init.velocity_half_range");
    cfg.init.intensity_max = detail::require_positive(
        detail::get_number(init, "intensity_max", cfg.init.intensity_max), "init.intensity_max");
    cfg.init.noise_var_max = detail::require_positive(
        detail::get_number(init, "noise_var_max", cfg.init.noise_var_max), "init.noise_var_max");
  }

  if (root.contains("metrics")) {
    const json& metrics = root["metrics"];
    detail::require_keys(metrics,
                         {"exclude_lost_runs", "gospa_cutoff", "gospa_order", "gospa_include_pa"},
                         "metrics");
    if (metrics.contains("exclude_lost_runs")) {
      cfg.metrics.exclude_lost_runs = metrics["exclude_lost_runs"].get<bool>();
    }
    cfg.metrics.gospa_cutoff = detail::require_positive(
        detail::get_number(metrics, "gospa_cutoff", cfg.metrics.gospa_cutoff),
        "metrics.gospa_cutoff");
    cfg.metrics.gospa_order = detail::get_number(metrics, "gospa_order", cfg.metrics.gospa_order);
    if (!(cfg.metrics.gospa_order >= 1.0)) {
      throw ConfigError("config: metrics.gospa_order must be >= 1");
    }
    if (metrics.contains("gospa_include_pa")) {
      cfg.metrics.gospa_include_pa = metrics["gospa_include_pa"].get<bool>();
    }
  }

  if (root.contains("runs")) {
    const json& runs = root["runs"];
    detail::require_keys(runs, {"count", "base_seed"}, "runs");
    if (runs.contains("count")) {
      cfg.run_count = runs["count"].get<int>();
      if (cfg.run_count <= 0) throw ConfigError("config: runs.count must be > 0");
    }
    if (runs.contains("base_seed")) cfg.base_seed = runs["base_seed"].get<std::uint64_t>();
  }

  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(root);
}

/// Serializes the config with every default filled in, so load(serialize(x))
/// is the identity.
inline nlohmann::json config_to_json(const ScenarioConfig& cfg) {
  using nlohmann::json;
  json root;
  json surfaces = json::array();
  for (const Surface& s : cfg.environment.surfaces) {
    surfaces.push_back({{"a", {s.a.x(), s.a.y()}},
                        {"b", {s.b.x(), s.b.y()}},
                        {"reflection", s.reflection_amplitude}});
  }
  json pas = json::array();
  for (const Vec2& p : cfg.environment.pa_positions) pas.push_back({p.x(), p.y()});
  root["environment"] = {{"surfaces", surfaces}, {"pa_positions", pas}};

  json traj;
  if (!cfg.trajectory.positions.empty()) {
    json positions = json::array();
    for (const Vec2& p : cfg.trajectory.positions) positions.push_back({p.x(), p.y()});
    traj["positions"] = positions;
  } else {
    json waypoints = json::array();
    for (const Vec2& p : cfg.trajectory.waypoints) waypoints.push_back({p.x(), p.y()});
    traj["waypoints"] = waypoints;
    traj["spacing"] = cfg.trajectory.spacing;
    if (cfg.trajectory.step_count > 0) traj["n_steps"] = cfg.trajectory.step_count;
  }
  root["trajectory"] = traj;

  root["signal"] = {{"f_c", cfg.spec.carrier_freq},
                    {"bandwidth", cfg.spec.bandwidth},
                    {"delta", cfg.spec.spacing}};
  root["amplitude"] = {{"pa_magnitude", cfg.amplitude.pa_magnitude},
                       {"va_magnitude", cfg.amplitude.va_magnitude},
                       {"gain", cfg.amplitude.gain}};
  root["noise"] = {{"eta_true", cfg.noise_var_true}};
  root["model"] = {{"sigma_x2", cfg.model.agent_accel_var},
                   {"dt", cfg.model.step_dt},
                   {"sigma_p_pa2", cfg.model.pa_walk_var},
                   {"sigma_p_va2", cfg.model.va_walk_var},
                   {"sigma_gamma2", cfg.model.intensity_walk_var},
                   {"p_s", cfg.model.survival_prob},
                   {"p_b", cfg.model.birth_prob},
                   {"c_eta", cfg.model.noise_shape},
                   {"t_dec", cfg.model.declare_threshold},
                   {"t_pru", cfg.model.prune_threshold},
                   {"gamma_init_factor", cfg.model.proposal_threshold_factor}};
  root["particles"] = {{"agent", cfg.agent_particles}, {"noise", cfg.noise_particles}};
  root["init"] = {{"position_radius", cfg.init.position_radius},
                  {"velocity_half_range", cfg.init.velocity_half_range},
                  {"intensity_max", cfg.init.intensity_max},
                  {"noise_var_max", cfg.init.noise_var_max}};
  root["metrics"] = {{"exclude_lost_runs", cfg.metrics.exclude_lost_runs},
                     {"gospa_cutoff", cfg.metrics.gospa_cutoff},
                     {"gospa_order", cfg.metrics.gospa_order},
                     {"gospa_include_pa", cfg.metrics.gospa_include_pa}};
  root["runs"] = {{"count", cfg.run_count}, {"base_seed", cfg.base_seed}};
  return root;
}

/// FNV-1a hash of the canonical (default-expanded, key-sorted) config text.
inline std::string config_hash(const ScenarioConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return std::string(buf);
}

/// Agent positions per step: explicit list, or the waypoint polyline sampled
/// at arc lengths k * spacing.
inline std::vector<Vec2> trajectory_positions(const ScenarioConfig& cfg) {
  const TrajectoryConfig& traj = cfg.trajectory;
  if (!traj.positions.empty()) return traj.positions;

  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < traj.waypoints.size(); ++i) {
    cumulative.push_back(cumulative.back() +
                         (traj.waypoints[i] - traj.waypoints[i - 1]).norm());
  }
  const double total = cumulative.back();
  int steps = traj.step_count;
  if (steps <= 0) steps = static_cast<int>(std::floor(total / traj.spacing)) + 1;
  if ((steps - 1) * traj.spacing > total + 1e-9) {
    throw ConfigError("config: trajectory polyline shorter than n_steps * spacing");
  }
  std::vector<Vec2> out;
  out.reserve(steps);
  std::size_t seg = 0;
  for (int k = 0; k < steps; ++k) {
    const double s = std::min(k * traj.spacing, total);
    while (seg + 2 < cumulative.size() && cumulative[seg + 1] < s) ++seg;
    const double seg_len = cumulative[seg + 1] - cumulative[seg];
    const double t = seg_len > 0.0 ? (s - cumulative[seg]) / seg_len : 0.0;
    out.push_back(traj.waypoints[seg] + t * (traj.waypoints[seg + 1] - traj.waypoints[seg]));
  }
  return out;
}

}  // namespace rfslam
