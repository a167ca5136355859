#pragma once

// Output files: per-round CSV, run summary JSON and the combined sweep CSV.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "flcarbon/config.hpp"
#include "flcarbon/csv.hpp"
#include "flcarbon/harness.hpp"

namespace flcarbon::report {

inline const std::vector<std::string>& round_columns() {
  static const std::vector<std::string> cols{"round",    "entity",     "loss",     "accuracy", "bits_tx",
                                             "bits_rx",  "energy_j",   "delta_c_kg", "c_tot_kg"};
  return cols;
}

/// One row per entity per round, then an "all" row with the round aggregate
/// (mean loss/accuracy, summed bits and energy, protocol-total emissions).
inline void write_rounds_csv(std::ostream& out, const RunResult& result) {
  csv::write_row(out, round_columns());
  const auto fmt = [](double v) { return csv::format_double(v); };
  for (const auto& log : result.rounds) {
    const std::string r = std::to_string(log.round);
    std::uint64_t rx_total = 0;
    for (const auto& e : log.entities) {
      csv::write_row(out, {r, e.entity, fmt(e.loss), fmt(e.accuracy), std::to_string(e.bits_tx),
                           std::to_string(e.bits_rx), fmt(e.energy_j), fmt(e.delta_c_kg), fmt(e.c_tot_kg)});
      rx_total += e.bits_rx;
    }
    csv::write_row(out, {r, "all", fmt(log.mean_loss), fmt(log.mean_accuracy), std::to_string(log.bits_total),
                         std::to_string(rx_total), fmt(log.energy_j), fmt(log.delta_c_kg), fmt(log.c_tot_kg)});
  }
}

inline config::ordered_json summary_json(const RunResult& result, const RunConfig& cfg) {
  const RunSummary& s = result.summary;
  config::ordered_json j;
  j["protocol"] = to_string(s.protocol);
  j["seed"] = s.seed;
  j["rounds_executed"] = s.rounds_executed;
  j["stop_reason"] = to_string(s.stop_reason);
  j["error"] = s.error.empty() ? config::ordered_json(nullptr) : config::ordered_json(s.error);
  j["final_loss"] = s.final_loss;
  j["final_accuracy"] = s.final_accuracy;
  j["min_accuracy"] = s.min_accuracy;
  j["max_accuracy"] = s.max_accuracy;
  j["target_reached"] = s.target_reached;
  j["c_tot_kg"] = s.c_tot_kg;
  j["c_devices_kg"] = s.c_devices_kg;
  j["c_ps_kg"] = s.c_ps_kg;
  j["budget_overshoot_kg"] = config::detail::optional_json(s.budget_overshoot_kg);
  j["energy_total_j"] = s.energy_total_j;
  j["bits_total"] = s.bits_total;
  const auto normalized = config::to_json(cfg);
  j["metadata"] = {{"n_params", s.n_params},
                   {"model_bits", s.model_bits},
                   {"payload_bits", payload_bits(cfg.compression, s.n_params)},
                   {"device_energy", normalized["device_energy"]},
                   {"ps_energy", normalized["ps_energy"]},
                   {"links", normalized["links"]},
                   {"carbon", normalized["carbon"]}};
  j["config"] = normalized;
  return j;
}

inline const std::vector<std::string>& sweep_result_columns() {
  static const std::vector<std::string> cols{
      "index",       "cell",         "repetition",    "seed",           "rounds_executed",
      "stop_reason", "final_loss",   "final_accuracy", "target_reached", "c_tot_kg",
      "c_devices_kg", "c_ps_kg",     "budget_overshoot_kg", "energy_total_j", "energy_per_round_j",
      "bits_total",  "bits_per_round"};
  return cols;
}

/// Axis columns first (in axis order), then the result columns.
inline void write_sweep_csv(std::ostream& out, const SweepSpec& spec,
                            const std::vector<SweepCellResult>& results) {
  std::vector<std::string> header = spec.axes.names();
  const auto& rest = sweep_result_columns();
  header.insert(header.end(), rest.begin(), rest.end());
  csv::write_row(out, header);
  const auto fmt = [](double v) { return csv::format_double(v); };
  for (const auto& cell : results) {
    const RunSummary& s = cell.result.summary;
    std::vector<std::string> row;
    for (const auto& [name, value] : cell.point.axis_values) row.push_back(value);
    const double rounds = static_cast<double>(s.rounds_executed);
    row.insert(row.end(),
               {std::to_string(cell.point.index), std::to_string(cell.point.cell),
                std::to_string(cell.point.repetition), std::to_string(s.seed), std::to_string(s.rounds_executed),
                to_string(s.stop_reason), fmt(s.final_loss), fmt(s.final_accuracy),
                s.target_reached ? "true" : "false", fmt(s.c_tot_kg), fmt(s.c_devices_kg), fmt(s.c_ps_kg),
                s.budget_overshoot_kg ? fmt(*s.budget_overshoot_kg) : "",
                fmt(s.energy_total_j), s.rounds_executed ? fmt(s.energy_total_j / rounds) : "",
                std::to_string(s.bits_total),
                s.rounds_executed ? fmt(static_cast<double>(s.bits_total) / rounds) : ""});
    csv::write_row(out, row);
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Writes rounds.csv and summary.json into dir (created if missing).
inline void write_run(const std::filesystem::path& dir, const RunResult& result, const RunConfig& cfg) {
  std::filesystem::create_directories(dir);
  std::ostringstream rounds;
  write_rounds_csv(rounds, result);
  write_text_file(dir / "rounds.csv", rounds.str());
  write_text_file(dir / "summary.json", summary_json(result, cfg).dump(2) + "\n");
}

}  // namespace flcarbon::report
