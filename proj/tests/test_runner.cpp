#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rfslam/runner.hpp"

using namespace rfslam;
using Catch::Approx;

namespace {

namespace fs = std::filesystem;

ScenarioConfig small_config(int steps = 12, int particles = 150, int noise_particles = 60) {
  ScenarioConfig cfg = load_config(fs::path(RFSLAM_SOURCE_DIR) / "scenarios" / "room_small.json");
  cfg.trajectory.step_count = steps;
  cfg.agent_particles = particles;
  cfg.noise_particles = noise_particles;
  cfg.run_count = 1;
  return cfg;
}

std::string record_fingerprint(const RunRecord& r) {
  std::ostringstream out;
  out << r.run_index << '|' << r.failed << '|' << r.failed_step << '|';
  for (const StepRecord& s : r.steps) out << detail::step_to_json(s).dump() << '\n';
  return out.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("run_experiment is reproducible for a fixed seed and index") {
  const ScenarioConfig cfg = small_config();
  const RunRecord a = run_experiment(cfg, 0);
  const RunRecord b = run_experiment(cfg, 0);
  REQUIRE_FALSE(a.failed);
  CHECK(record_fingerprint(a) == record_fingerprint(b));
  CHECK(a.steps.size() == 12);
}

TEST_CASE("different run indices see different noise realizations") {
  const ScenarioConfig cfg = small_config();
  const RunRecord a = run_experiment(cfg, 0);
  const RunRecord b = run_experiment(cfg, 1);
  CHECK(record_fingerprint(a) != record_fingerprint(b));
}

TEST_CASE("concurrent runs match sequential runs") {
  ScenarioConfig cfg = small_config(8, 100, 40);
  cfg.run_count = 3;
  const std::vector<RunRecord> seq = run_all(cfg, 1);
  const std::vector<RunRecord> par = run_all(cfg, 3);
  REQUIRE(seq.size() == par.size());
  for (std::size_t r = 0; r < seq.size(); ++r) {
    CHECK(record_fingerprint(seq[r]) == record_fingerprint(par[r]));
  }
}

TEST_CASE("emit_outputs writes one line per step and stable metrics") {
  ScenarioConfig cfg = small_config(10, 100, 40);
  cfg.run_count = 1;
  const std::vector<RunRecord> records{run_experiment(cfg, 0)};

  const fs::path dir = fs::temp_directory_path() / "rfslam_test_emit";
  fs::remove_all(dir);
  emit_outputs(records, cfg, dir);

  std::ifstream run_file(dir / "run_000.jsonl");
  REQUIRE(run_file.good());
  int lines = 0;
  std::string line;
  while (std::getline(run_file, line)) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines == 10);

  std::ifstream rmse_file(dir / "rmse.csv");
  int rmse_lines = 0;
  while (std::getline(rmse_file, line)) ++rmse_lines;
  CHECK(rmse_lines == 11);  // header + one row per step

  // Re-emitting the same records produces identical bytes.
  const std::string manifest_before = slurp(dir / "manifest.json");
  const std::string rmse_before = slurp(dir / "rmse.csv");
  const std::string gospa_before = slurp(dir / "gospa.csv");
  emit_outputs(records, cfg, dir);
  CHECK(slurp(dir / "manifest.json") == manifest_before);
  CHECK(slurp(dir / "rmse.csv") == rmse_before);
  CHECK(slurp(dir / "gospa.csv") == gospa_before);

  // Records round-trip through the files.
  const auto [loaded, loaded_cfg] = load_records(dir);
  REQUIRE(loaded.size() == 1);
  CHECK(record_fingerprint(loaded[0]) == record_fingerprint(records[0]));
  CHECK(config_hash(loaded_cfg) == config_hash(cfg));

  // eval regenerates byte-identical metric files from the records.
  const fs::path eval_dir = dir / "eval";
  fs::create_directories(eval_dir);
  emit_metrics(loaded, loaded_cfg, eval_dir);
  CHECK(slurp(eval_dir / "rmse.csv") == rmse_before);
  CHECK(slurp(eval_dir / "gospa.csv") == gospa_before);
  fs::remove_all(dir);
}

TEST_CASE("reference trajectory shape runs end to end at reduced size") {
  ScenarioConfig cfg = load_config(fs::path(RFSLAM_SOURCE_DIR) / "scenarios" / "default.json");
  cfg.agent_particles = 40;
  cfg.noise_particles = 20;
  cfg.run_count = 1;
  const RunRecord record = run_experiment(cfg, 0);
  CHECK(record.steps.size() + (record.failed ? 1u : 0u) >= 1u);
  if (!record.failed) {
    CHECK(record.steps.size() == 679);
  }
  // The filter may or may not keep a clean track at this tiny particle
  // count; the contract here is that the full-length scenario executes.
}
