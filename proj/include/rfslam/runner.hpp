#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rfslam/beliefs.hpp"
#include "rfslam/engine.hpp"
#include "rfslam/evaluation.hpp"
#include "rfslam/scenario.hpp"
#include "rfslam/version.hpp"

namespace rfslam {

struct StepRecord {
  int k = 0;  // 1-based step index
  Vec2 truth_position = Vec2::Zero();
  AgentState estimate;
  std::vector<FeatureEstimate> features;
  std::vector<double> noise_var;  // per anchor
  double position_error = 0.0;
};

/// Everything one seeded run produced.
struct RunRecord {
  int run_index = 0;
  std::uint64_t base_seed = 0;
  std::string config_hash;
  bool failed = false;
  int failed_step = 0;
  std::vector<StepRecord> steps;
};

/// Initial beliefs: agent position uniform on a disk around the true start,
/// velocity uniform per axis, one anchor feature per receiver with existence
/// one, and a broad uniform noise-variance prior.
inline Beliefs init_beliefs(const ScenarioConfig& cfg, const Vec2& start,
                            const StreamKey& run_key) {
  Beliefs b;
  const std::size_t count = static_cast<std::size_t>(cfg.agent_particles);
  const std::size_t noise_count = static_cast<std::size_t>(cfg.noise_particles);
  const std::size_t anchors = cfg.environment.pa_positions.size();

  Rng agent_rng = run_key.child(kStreamInit, 0).stream();
  b.agent.particles.resize(count);
  b.agent.weights.assign(count, 1.0 / static_cast<double>(count));
  for (AgentState& x : b.agent.particles) {
    const double radius = cfg.init.position_radius * std::sqrt(agent_rng.uniform(0.0, 1.0));
    const double angle = agent_rng.uniform(0.0, 2.0 * std::numbers::pi);
    x.position = start + radius * Vec2(std::cos(angle), std::sin(angle));
    x.velocity = Vec2(agent_rng.uniform(-cfg.init.velocity_half_range, cfg.init.velocity_half_range),
                      agent_rng.uniform(-cfg.init.velocity_half_range, cfg.init.velocity_half_range));
  }

  b.features.resize(anchors);
  b.noise.resize(anchors);
  b.noise_var_estimate.resize(anchors);
  for (std::size_t j = 0; j < anchors; ++j) {
    Rng rng = run_key.child(kStreamInit, 1, j).stream();
    FeatureBelief pa;
    pa.is_pa = true;
    pa.particles.resize(count);
    pa.weights.assign(count, 1.0 / static_cast<double>(count));
    const double pos_sigma = std::sqrt(cfg.model.pa_walk_var);
    for (FeatureParticle& phi : pa.particles) {
      phi.position = cfg.environment.pa_positions[j] +
                     Vec2(rng.normal(0.0, pos_sigma), rng.normal(0.0, pos_sigma));
      phi.intensity = rng.uniform(0.0, cfg.init.intensity_max);
    }
    b.features[j].push_back(std::move(pa));

    NoiseBelief noise;
    noise.particles.resize(noise_count);
    noise.weights.assign(noise_count, 1.0 / static_cast<double>(noise_count));
    for (double& eta : noise.particles) {
      do {
        eta = rng.uniform(0.0, cfg.init.noise_var_max);
      } while (!(eta > 0.0));
    }
    b.noise[j] = std::move(noise);
    b.noise_var_estimate[j] = b.noise[j].mean();
  }
  return b;
}

/// Runs one seeded Monte Carlo repetition. Data generation and inference use
/// independent streams derived from (base_seed, run_index), so runs are
/// reproducible and order-independent. A degenerate particle update marks
/// the run failed at that step.
inline RunRecord run_experiment(const ScenarioConfig& cfg, int run_index,
                                std::vector<std::vector<Eigen::VectorXcd>>* signal_sink = nullptr) {
  const std::vector<Vec2> path = trajectory_positions(cfg);
  const std::size_t anchors = cfg.environment.pa_positions.size();
  const StreamKey root(cfg.base_seed);
  const StreamKey run_key = root.child(kStreamRun, static_cast<std::uint64_t>(run_index));

  std::vector<Rng> data_rng;
  data_rng.reserve(anchors);
  for (std::size_t j = 0; j < anchors; ++j) {
    data_rng.push_back(run_key.child(kStreamData, j).stream());
  }

  RunRecord record;
  record.run_index = run_index;
  record.base_seed = cfg.base_seed;
  record.config_hash = config_hash(cfg);

  Beliefs beliefs = init_beliefs(cfg, path.front(), run_key);

  for (std::size_t k = 0; k < path.size(); ++k) {
    const FeatureTruth truth = ground_truth_features(cfg.environment, path[k]);
    std::vector<Eigen::VectorXcd> signals(anchors);
    for (std::size_t j = 0; j < anchors; ++j) {
      signals[j] =
          synthesize_received(truth[j], cfg.spec, cfg.amplitude, cfg.noise_var_true, data_rng[j]);
    }
    if (signal_sink) signal_sink->push_back(signals);

    StepRecord step_record;
    step_record.k = static_cast<int>(k) + 1;
    step_record.truth_position = path[k];
    try {
      const StepEstimates est = step(beliefs, signals, cfg.model, cfg.spec,
                                     run_key.child(kStreamStep, static_cast<std::uint64_t>(k + 1)));
      step_record.estimate = est.agent;
      step_record.features = est.features;
      step_record.noise_var = est.noise_var;
      step_record.position_error = (est.agent.position - path[k]).norm();
    } catch (const DegeneracyError&) {
      record.failed = true;
      record.failed_step = static_cast<int>(k) + 1;
      break;
    }
    record.steps.push_back(std::move(step_record));
  }
  return record;
}

/// Runs all configured repetitions, concurrently when workers > 1. Results
/// are identical to sequential execution.
inline std::vector<RunRecord> run_all(const ScenarioConfig& cfg, unsigned workers = 0) {
  if (workers == 0) {
    workers = std::max(1u, std::thread::hardware_concurrency());
  }
  std::vector<RunRecord> records(cfg.run_count);
  if (workers == 1 || cfg.run_count == 1) {
    for (int r = 0; r < cfg.run_count; ++r) records[r] = run_experiment(cfg, r);
    return records;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < std::min<unsigned>(workers, cfg.run_count); ++w) {
    pool.emplace_back([&] {
      for (int r = next.fetch_add(1); r < cfg.run_count; r = next.fetch_add(1)) {
        records[r] = run_experiment(cfg, r);
      }
    });
  }
  for (std::thread& t : pool) t.join();
  return records;
}

namespace detail {

inline nlohmann::json step_to_json(const StepRecord& s) {
  nlohmann::json features = nlohmann::json::array();
  for (const FeatureEstimate& f : s.features) {
    features.push_back({{"pa", f.pa_index},
                        {"n", f.feature_index},
                        {"is_pa", f.is_pa},
                        {"pos", {f.position.x(), f.position.y()}},
                        {"gamma", f.intensity},
                        {"existence", f.existence}});
  }
  return nlohmann::json{{"k", s.k},
                        {"truth", {s.truth_position.x(), s.truth_position.y()}},
                        {"est_p", {s.estimate.position.x(), s.estimate.position.y()}},
                        {"est_v", {s.estimate.velocity.x(), s.estimate.velocity.y()}},
                        {"err", s.position_error},
                        {"eta_hat", s.noise_var},
                        {"features", features}};
}

inline StepRecord step_from_json(const nlohmann::json& j) {
  StepRecord s;
  s.k = j.at("k").get<int>();
  s.truth_position = Vec2(j.at("truth")[0].get<double>(), j.at("truth")[1].get<double>());
  s.estimate.position = Vec2(j.at("est_p")[0].get<double>(), j.at("est_p")[1].get<double>());
  s.estimate.velocity = Vec2(j.at("est_v")[0].get<double>(), j.at("est_v")[1].get<double>());
  s.position_error = j.at("err").get<double>();
  s.noise_var = j.at("eta_hat").get<std::vector<double>>();
  for (const nlohmann::json& fj : j.at("features")) {
    FeatureEstimate f;
    f.pa_index = fj.at("pa").get<int>();
    f.feature_index = fj.at("n").get<int>();
    f.is_pa = fj.at("is_pa").get<bool>();
    f.position = Vec2(fj.at("pos")[0].get<double>(), fj.at("pos")[1].get<double>());
    f.intensity = fj.at("gamma").get<double>();
    f.existence = fj.at("existence").get<double>();
    s.features.push_back(f);
  }
  return s;
}

inline std::string run_file_name(int run_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "run_%03d.jsonl", run_index);
  return buf;
}

}  // namespace detail

/// Writes the per-step metric CSVs: rmse.csv, cdf.csv, gospa.csv, eta.csv.
/// Failed runs are skipped entirely; track-lost runs are excluded from the
/// agent-error metrics when the config says so.
inline void emit_metrics(const std::vector<RunRecord>& records, const ScenarioConfig& cfg,
                         const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const std::size_t anchors = cfg.environment.pa_positions.size();
  std::vector<const RunRecord*> complete;
  for (const RunRecord& r : records) {
    if (!r.failed && !r.steps.empty()) complete.push_back(&r);
  }

  std::vector<std::vector<double>> errors;
  std::vector<bool> lost;
  for (const RunRecord* r : complete) {
    std::vector<double> e;
    e.reserve(r->steps.size());
    for (const StepRecord& s : r->steps) e.push_back(s.position_error);
    lost.push_back(detect_track_loss(e).lost);
    errors.push_back(std::move(e));
  }

  std::vector<std::vector<double>> kept_errors;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!cfg.metrics.exclude_lost_runs || !lost[i]) kept_errors.push_back(errors[i]);
  }
  if (kept_errors.empty()) kept_errors = errors;  // fall back when every run lost track

  std::ofstream rmse_out(out_dir / "rmse.csv");
  rmse_out << "step,rmse\n";
  if (!kept_errors.empty()) {
    const std::vector<double> rmse = rmse_per_step(kept_errors);
    for (std::size_t k = 0; k < rmse.size(); ++k) {
      rmse_out << (k + 1) << ',' << rmse[k] << '\n';
    }
  }

  std::ofstream cdf_out(out_dir / "cdf.csv");
  cdf_out << "value,cdf\n";
  std::vector<double> pooled;
  for (const auto& run : kept_errors) pooled.insert(pooled.end(), run.begin(), run.end());
  if (!pooled.empty()) {
    for (const auto& [value, fraction] : empirical_cdf(std::move(pooled))) {
      cdf_out << value << ',' << fraction << '\n';
    }
  }

  // Ground-truth feature sets per step, from the scene geometry.
  const std::vector<Vec2> path = trajectory_positions(cfg);
  std::ofstream gospa_out(out_dir / "gospa.csv");
  gospa_out << "step";
  for (std::size_t j = 0; j < anchors; ++j) gospa_out << ",gospa_pa" << (j + 1);
  gospa_out << '\n';
  std::ofstream eta_out(out_dir / "eta.csv");
  eta_out << "step,eta_true";
  for (std::size_t j = 0; j < anchors; ++j) eta_out << ",eta_hat_pa" << (j + 1);
  eta_out << '\n';

  if (!complete.empty()) {
    const std::size_t steps = complete.front()->steps.size();
    for (std::size_t k = 0; k < steps; ++k) {
      const FeatureTruth truth = ground_truth_features(cfg.environment, path[k]);
      gospa_out << (k + 1);
      eta_out << (k + 1) << ',' << cfg.noise_var_true;
      for (std::size_t j = 0; j < anchors; ++j) {
        std::vector<Vec2> truth_set;
        for (const Feature& f : truth[j]) {
          if (f.kind == FeatureKind::Va || cfg.metrics.gospa_include_pa) {
            truth_set.push_back(f.position);
          }
        }
        double gospa_sum = 0.0;
        double eta_sum = 0.0;
        for (const RunRecord* r : complete) {
          std::vector<Vec2> estimates;
          for (const FeatureEstimate& f : r->steps[k].features) {
            if (f.pa_index != static_cast<int>(j)) continue;
            if (f.is_pa && !cfg.metrics.gospa_include_pa) continue;
            estimates.push_back(f.position);
          }
          gospa_sum += gospa(estimates, truth_set, cfg.metrics.gospa_cutoff,
                             cfg.metrics.gospa_order);
          eta_sum += r->steps[k].noise_var[j];
        }
        gospa_out << ',' << gospa_sum / static_cast<double>(complete.size());
        eta_out << ',' << eta_sum / static_cast<double>(complete.size());
      }
      gospa_out << '\n';
      eta_out << '\n';
    }
  }
}

/// Writes one JSON-lines record per run (one step per line), the metric CSVs,
/// and a manifest holding the default-expanded config, its hash, and
/// versions.
inline void emit_outputs(const std::vector<RunRecord>& records, const ScenarioConfig& cfg,
                         const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  nlohmann::json run_entries = nlohmann::json::array();
  for (const RunRecord& r : records) {
    const std::string name = detail::run_file_name(r.run_index);
    std::ofstream out(out_dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("emit_outputs: cannot write " + (out_dir / name).string());
    for (const StepRecord& s : r.steps) {
      out << detail::step_to_json(s).dump() << '\n';
    }
    run_entries.push_back({{"file", name},
                           {"run_index", r.run_index},
                           {"failed", r.failed},
                           {"failed_step", r.failed_step}});
  }

  nlohmann::json manifest{{"config", config_to_json(cfg)},
                          {"config_hash", config_hash(cfg)},
                          {"library_version", kLibraryVersion},
                          {"runs", run_entries}};
  std::ofstream manifest_out(out_dir / "manifest.json", std::ios::binary);
  manifest_out << manifest.dump(2) << '\n';

  emit_metrics(records, cfg, out_dir);
}

/// Loads records (and the expanded config) back from an output directory.
inline std::pair<std::vector<RunRecord>, ScenarioConfig> load_records(
    const std::filesystem::path& dir) {
  std::ifstream manifest_in(dir / "manifest.json");
  if (!manifest_in) throw std::runtime_error("load_records: no manifest.json in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(manifest_in);
  ScenarioConfig cfg = config_from_json(manifest.at("config"));
  const std::string hash = manifest.at("config_hash").get<std::string>();

  std::vector<RunRecord> records;
  for (const nlohmann::json& entry : manifest.at("runs")) {
    RunRecord r;
    r.run_index = entry.at("run_index").get<int>();
    r.failed = entry.at("failed").get<bool>();
    r.failed_step = entry.at("failed_step").get<int>();
    r.base_seed = cfg.base_seed;
    r.config_hash = hash;
    std::ifstream in(dir / entry.at("file").get<std::string>());
    if (!in) throw std::runtime_error("load_records: missing " + entry.at("file").get<std::string>());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      r.steps.push_back(detail::step_from_json(nlohmann::json::parse(line)));
    }
    records.push_back(std::move(r));
  }
  return {std::move(records), std::move(cfg)};
}

}  // namespace rfslam
