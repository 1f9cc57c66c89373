// Command-line harness: seeded experiment runner, record evaluation, and
// matched-filter tracing for a scenario config.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "rfslam/runner.hpp"

namespace fs = std::filesystem;

namespace {

unsigned default_workers() {
  if (const char* env = std::getenv("RFSLAM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void apply_overrides(rfslam::ScenarioConfig& cfg, int runs, long long seed, int particles) {
  if (runs > 0) cfg.run_count = runs;
  if (seed >= 0) cfg.base_seed = static_cast<std::uint64_t>(seed);
  if (particles > 0) cfg.agent_particles = particles;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, int runs,
            long long seed, int particles, bool dump_signals, unsigned workers) {
  rfslam::ScenarioConfig cfg = rfslam::load_config(config_path);
  apply_overrides(cfg, runs, seed, particles);

  std::vector<rfslam::RunRecord> records;
  if (dump_signals) {
    fs::create_directories(out_dir);
    for (int r = 0; r < cfg.run_count; ++r) {
      std::vector<std::vector<Eigen::VectorXcd>> signals;
      records.push_back(rfslam::run_experiment(cfg, r, &signals));
      char name[32];
      std::snprintf(name, sizeof(name), "signals_%03d.csv", r);
      std::ofstream out(fs::path(out_dir) / name);
      out << "step,pa,m,re,im\n";
      for (std::size_t k = 0; k < signals.size(); ++k) {
        for (std::size_t j = 0; j < signals[k].size(); ++j) {
          for (Eigen::Index m = 0; m < signals[k][j].size(); ++m) {
            out << (k + 1) << ',' << (j + 1) << ',' << (m + 1) << ','
                << signals[k][j][m].real() << ',' << signals[k][j][m].imag() << '\n';
          }
        }
      }
    }
  } else {
    records = rfslam::run_all(cfg, workers);
  }
  rfslam::emit_outputs(records, cfg, out_dir);

  int failed = 0;
  for (const auto& r : records) failed += r.failed ? 1 : 0;
  std::cout << "wrote " << records.size() << " run(s) to " << out_dir;
  if (failed > 0) std::cout << " (" << failed << " failed)";
  std::cout << '\n';
  return failed == static_cast<int>(records.size()) && !records.empty() ? 1 : 0;
}

int cmd_eval(const std::string& records_dir, const std::string& out_dir) {
  auto [records, cfg] = rfslam::load_records(records_dir);
  fs::create_directories(out_dir);
  rfslam::emit_metrics(records, cfg, out_dir);
  std::cout << "wrote metrics for " << records.size() << " run(s) to " << out_dir << '\n';
  return 0;
}

int cmd_trace(const std::string& config_path, int run_index, int step_index,
              const std::string& out_path) {
  rfslam::ScenarioConfig cfg = rfslam::load_config(config_path);
  const auto path = rfslam::trajectory_positions(cfg);
  if (step_index < 1 || step_index > static_cast<int>(path.size())) {
    std::cerr << "trace: step must be in [1, " << path.size() << "]\n";
    return 1;
  }
  const std::size_t anchors = cfg.environment.pa_positions.size();
  const rfslam::StreamKey run_key =
      rfslam::StreamKey(cfg.base_seed)
          .child(rfslam::kStreamRun, static_cast<std::uint64_t>(run_index));

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) {
      std::cerr << "trace: cannot open " << out_path << '\n';
      return 1;
    }
    out = &file;
  }
  *out << "pa,bin,delay_m,magnitude\n";
  for (std::size_t j = 0; j < anchors; ++j) {
    rfslam::Rng rng = run_key.child(rfslam::kStreamData, j).stream();
    Eigen::VectorXcd z;
    // Advance the per-anchor data stream through the earlier steps so the
    // dumped snapshot matches what the filter sees in a full run.
    for (int k = 1; k <= step_index; ++k) {
      const auto truth = rfslam::ground_truth_features(cfg.environment, path[k - 1]);
      z = rfslam::synthesize_received(truth[j], cfg.spec, cfg.amplitude, cfg.noise_var_true,
                                      rng);
    }
    const Eigen::VectorXd spectrum = rfslam::matched_filter_spectrum(z, cfg.spec);
    for (int m = 0; m < cfg.spec.sample_count; ++m) {
      *out << (j + 1) << ',' << (m + 1) << ','
           << m * cfg.spec.tau_step * rfslam::kSpeedOfLight << ',' << spectrum[m] << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multipath-aided SLAM on raw baseband radio snapshots"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  int runs = 0;
  long long seed = -1;
  int particles = 0;
  bool dump_signals = false;
  unsigned workers = default_workers();

  CLI::App* run = app.add_subcommand("run", "run seeded Monte Carlo experiments");
  run->add_option("config", config_path, "scenario config (JSON)")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--runs", runs, "override number of runs");
  run->add_option("--seed", seed, "override base seed");
  run->add_option("--particles", particles, "override agent/feature particle count");
  run->add_option("--workers", workers, "concurrent runs (default RFSLAM_THREADS or cores)");
  run->add_flag("--dump-signals", dump_signals, "also write raw snapshots as CSV");

  std::string records_dir;
  std::string eval_out;
  CLI::App* eval = app.add_subcommand("eval", "recompute metric CSVs from records");
  eval->add_option("records", records_dir, "directory with manifest.json and run files")
      ->required();
  eval->add_option("--out", eval_out, "output directory (default: records dir)");

  std::string trace_config;
  int trace_run = 0;
  int trace_step = 1;
  std::string trace_out;
  CLI::App* trace = app.add_subcommand("trace", "dump matched-filter spectra for one step");
  trace->add_option("config", trace_config, "scenario config (JSON)")->required();
  trace->add_option("--run", trace_run, "run index");
  trace->add_option("--step", trace_step, "1-based step index");
  trace->add_option("--out", trace_out, "CSV path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(config_path, out_dir, runs, seed, particles, dump_signals, workers);
    }
    if (eval->parsed()) {
      return cmd_eval(records_dir, eval_out.empty() ? records_dir : eval_out);
    }
    if (trace->parsed()) {
      return cmd_trace(trace_config, trace_run, trace_step, trace_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
