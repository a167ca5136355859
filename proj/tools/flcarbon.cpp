// flcarbon: run, sweep and validate FL carbon-footprint experiments.
//
// Exit codes: 0 success, 1 I/O or internal error, 2 invalid config or usage,
// 3 a run diverged (outputs are still written).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "flcarbon/flcarbon.hpp"

namespace fs = std::filesystem;
using namespace flcarbon;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitDiverged = 3;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("flcarbon");
  logger->set_pattern("%^%l%$: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("FLCARBON_LOG")) {
    const std::string level = env;
    if (level == "error" || level == "warn" || level == "info" || level == "debug") {
      spdlog::set_level(spdlog::level::from_str(level));
    } else {
      spdlog::warn("FLCARBON_LOG={} not recognized, expected error, warn, info or debug", level);
    }
  }
}

fs::path config_dir(const std::string& path) { return fs::absolute(path).parent_path(); }

int cmd_validate(const std::string& path) {
  const auto doc = config::load_json_file(path);
  if (doc.is_object() && doc.contains("base")) {
    std::cout << config::to_json(config::parse_sweep_spec(doc, config_dir(path))).dump(2) << "\n";
  } else {
    std::cout << config::to_json(config::parse_run_config(doc, config_dir(path))).dump(2) << "\n";
  }
  return kExitOk;
}

int cmd_run(const std::string& path, const std::string& out, std::optional<std::uint64_t> seed) {
  RunConfig cfg = config::parse_run_config(config::load_json_file(path), config_dir(path));
  if (seed) cfg.seed = *seed;
  spdlog::info("run: protocol={} K={} seed={}", to_string(cfg.protocol), cfg.num_devices, cfg.seed);
  const RunResult result = run(cfg, [](const RoundLog& log) {
    spdlog::debug("round {}: accuracy={:.4f} c_tot={:.6g} kg", log.round, log.mean_accuracy, log.c_tot_kg);
  });
  report::write_run(out, result, cfg);
  const RunSummary& s = result.summary;
  spdlog::info("done: {} rounds, stop={}, accuracy={:.4f}, c_tot={:.6g} kg", s.rounds_executed,
               to_string(s.stop_reason), s.final_accuracy, s.c_tot_kg);
  if (s.stop_reason == StopReason::diverged) {
    spdlog::error("run diverged after {} rounds: {}", s.rounds_executed, s.error);
    return kExitDiverged;
  }
  return kExitOk;
}

int cmd_sweep(const std::string& path, const std::string& out, std::size_t jobs) {
  const SweepSpec spec = config::parse_sweep_spec(config::load_json_file(path), config_dir(path));
  const auto results = sweep(spec, jobs);
  fs::create_directories(out);
  const std::size_t width = std::to_string(results.empty() ? 0 : results.size() - 1).size();
  bool diverged = false;
  for (const auto& cell : results) {
    std::string name = std::to_string(cell.point.index);
    name.insert(0, width - name.size(), '0');
    report::write_run(fs::path(out) / ("point_" + name), cell.result, cell.point.config);
    if (cell.result.summary.stop_reason == StopReason::diverged) {
      spdlog::error("sweep point {} diverged: {}", cell.point.index, cell.result.summary.error);
      diverged = true;
    }
  }
  std::ostringstream table;
  report::write_sweep_csv(table, spec, results);
  report::write_text_file(fs::path(out) / "sweep.csv", table.str());
  spdlog::info("sweep: {} points written to {}", results.size(), out);
  return diverged ? kExitDiverged : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Energy and carbon accounting for federated and consensus-driven learning"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;

  auto* run_cmd = app.add_subcommand("run", "Run one experiment");
  run_cmd->add_option("--config", config_path, "JSON config file")->required();
  run_cmd->add_option("--out", out_dir, "Output directory")->required();
  run_cmd->add_option("--seed", seed, "Override the config seed");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run a grid of experiments");
  sweep_cmd->add_option("--config", config_path, "JSON sweep file")->required();
  sweep_cmd->add_option("--out", out_dir, "Output directory")->required();
  sweep_cmd->add_option("--jobs", jobs, "Grid points run in parallel")->check(CLI::PositiveNumber);

  auto* validate_cmd = app.add_subcommand("validate", "Print the normalized config");
  validate_cmd->add_option("--config", config_path, "JSON config or sweep file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*run_cmd) return cmd_run(config_path, out_dir, seed);
    if (*sweep_cmd) return cmd_sweep(config_path, out_dir, jobs);
    return cmd_validate(config_path);
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return kExitInvalid;
  } catch (const DivergenceError& e) {
    spdlog::error("{}", e.what());
    return kExitDiverged;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }
}
