#pragma once

// Per-round energy of FA devices, the parameter server and CFA devices, and
// the iterative per-entity carbon ledger.
//
// Energies are in Joule, link efficiencies in bit/Joule, carbon intensities
// in kgCO2-eq/kWh, emissions in kgCO2-eq. The ledger converts Joule to kWh.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "flcarbon/compression.hpp"
#include "flcarbon/csv.hpp"
#include "flcarbon/errors.hpp"

namespace flcarbon {

inline constexpr double kJoulePerKwh = 3.6e6;

enum class Protocol { fa, cfa };

inline std::string to_string(Protocol p) { return p == Protocol::fa ? "fa" : "cfa"; }

inline Protocol protocol_from_string(const std::string& s) {
  if (s == "fa") return Protocol::fa;
  if (s == "cfa") return Protocol::cfa;
  throw ValidationError("protocol: expected \"fa\" or \"cfa\", got \"" + s + "\"");
}

/// Per-device compute-side energy constants. Defaults are for the MNIST-sized
/// model on Jetson Nano class devices.
struct EnergyProfile {
  double e_comp_j = 3.51;    ///< local optimizer, per round
  double e_q_min_j = 0.04;   ///< compression cost at delta = 0.1
  double e_q_max_j = 0.14;   ///< compression cost at delta = 1
  double e_sleep_j = 0.12;   ///< idle while waiting, per round
  double e_global_j = 0.06;  ///< one weighted-averaging step

  void validate() const {
    for (double v : {e_comp_j, e_q_min_j, e_q_max_j, e_sleep_j, e_global_j}) {
      detail::require(std::isfinite(v) && v >= 0.0, "device_energy: energies must be finite and >= 0");
    }
    detail::require(e_q_min_j <= e_q_max_j, "device_energy: e_q_min_j must not exceed e_q_max_j");
  }

  /// Affine in delta between the endpoints at 0.1 and 1, clamped outside.
  double compression_energy(double delta) const {
    const double f = std::clamp((delta - 0.1) / 0.9, 0.0, 1.0);
    return e_q_min_j + f * (e_q_max_j - e_q_min_j);
  }

  bool operator==(const EnergyProfile&) const = default;
};

/// Parameter-server constants (defaults for the MNIST-sized model, desktop CPU).
struct ServerEnergyProfile {
  double e_global_j = 0.24;  ///< per aggregated device update
  double e_sleep_j = 0.70;

  void validate() const {
    detail::require(std::isfinite(e_global_j) && e_global_j >= 0.0 && std::isfinite(e_sleep_j) &&
                        e_sleep_j >= 0.0,
                    "ps_energy: energies must be finite and >= 0");
  }

  bool operator==(const ServerEnergyProfile&) const = default;
};

struct LinkEfficiencies {
  double ee_downlink = 10000.0;  ///< bit/J
  double ee_uplink = 10000.0;
  double ee_sidelink = 10000.0;

  static LinkEfficiencies uniform(double ee) { return {ee, ee, ee}; }

  void validate() const {
    for (double v : {ee_downlink, ee_uplink, ee_sidelink}) {
      detail::require(v > 0.0 && !std::isnan(v), "links: efficiencies must be > 0");
    }
  }

  bool operator==(const LinkEfficiencies&) const = default;
};

/// Energy split into computing and communication parts.
struct EnergyTerms {
  double compute_j = 0.0;
  double communication_j = 0.0;
  double total() const { return compute_j + communication_j; }
};

/// FA device: E_comp + b_W/EE_D + t N_b/EE_U + E_Q(delta) + E_sleep.
inline EnergyTerms fa_device_energy(const EnergyProfile& profile, const LinkEfficiencies& links,
                                    const CompressionPolicy& policy, std::size_t n_params) {
  profile.validate();
  links.validate();
  const double b_w = static_cast<double>(model_bits(n_params, policy.n_bits_clear));
  const double up = static_cast<double>(payload_bits(policy, n_params));
  return {profile.e_comp_j + profile.compression_energy(policy.delta) + profile.e_sleep_j,
          b_w / links.ee_downlink + up / links.ee_uplink};
}

/// Parameter server: K E_global + b_W/EE_U + sum_k t_k N_b,k / EE_D + E_sleep.
/// Publication is charged at the uplink efficiency and collection at the
/// downlink efficiency, following the server-side labelling of the model.
inline EnergyTerms ps_energy(const ServerEnergyProfile& profile, const LinkEfficiencies& links,
                             std::span<const CompressionPolicy> device_policies, std::size_t n_params,
                             int n_bits_clear = 32) {
  profile.validate();
  links.validate();
  const double b_w = static_cast<double>(model_bits(n_params, n_bits_clear));
  double collect = 0.0;
  for (const auto& p : device_policies) collect += static_cast<double>(payload_bits(p, n_params));
  return {static_cast<double>(device_policies.size()) * profile.e_global_j + profile.e_sleep_j,
          b_w / links.ee_uplink + collect / links.ee_downlink};
}

/// CFA device: E_comp + N E_global + sum_h t_h N_b,h / EE_S + t_k N_b,k / EE_S
/// + E_Q(delta) + E_sleep, N = number of neighbours.
inline EnergyTerms cfa_device_energy(const EnergyProfile& profile, const LinkEfficiencies& links,
                                     const CompressionPolicy& own,
                                     std::span<const CompressionPolicy> neighbor_policies,
                                     std::size_t n_params) {
  profile.validate();
  links.validate();
  detail::require(!neighbor_policies.empty(), "cfa_device_energy: need at least one neighbour");
  double receive = 0.0;
  for (const auto& p : neighbor_policies) receive += static_cast<double>(payload_bits(p, n_params));
  const double send = static_cast<double>(payload_bits(own, n_params));
  const double n = static_cast<double>(neighbor_policies.size());
  return {profile.e_comp_j + n * profile.e_global_j + profile.compression_energy(own.delta) +
              profile.e_sleep_j,
          receive / links.ee_sidelink + send / links.ee_sidelink};
}

struct IntensityStep {
  double start_time_s = 0.0;
  double intensity = 0.0;  ///< kgCO2-eq/kWh

  bool operator==(const IntensityStep&) const = default;
};

/// Stepwise carbon intensity for one entity (0 = parameter server). Round i
/// completes at t_i = start_time_s + i * round_duration_s; the intensity is
/// that of the last step starting at or before t_i, or of the first step if
/// t_i precedes all of them.
class CarbonIntensitySchedule {
 public:
  CarbonIntensitySchedule() = default;
  CarbonIntensitySchedule(std::size_t entity, std::vector<IntensityStep> steps,
                          double round_duration_s = 60.0, double start_time_s = 0.0)
      : entity_(entity), steps_(std::move(steps)), round_duration_s_(round_duration_s),
        start_time_s_(start_time_s) {
    validate();
  }

  static CarbonIntensitySchedule constant(std::size_t entity, double intensity,
                                          double round_duration_s = 60.0) {
    return {entity, {{0.0, intensity}}, round_duration_s};
  }

  std::size_t entity() const noexcept { return entity_; }
  const std::vector<IntensityStep>& steps() const noexcept { return steps_; }
  double round_duration_s() const noexcept { return round_duration_s_; }

  double time_of_round(std::size_t round) const {
    return start_time_s_ + static_cast<double>(round) * round_duration_s_;
  }

  double intensity_at(double time_s) const {
    auto it = std::upper_bound(steps_.begin(), steps_.end(), time_s,
                               [](double t, const IntensityStep& s) { return t < s.start_time_s; });
    if (it == steps_.begin()) return steps_.front().intensity;
    return std::prev(it)->intensity;
  }

  double intensity_for_round(std::size_t round) const { return intensity_at(time_of_round(round)); }

  void validate() const {
    detail::require(!steps_.empty(), "carbon schedule: no steps for entity " + std::to_string(entity_));
    detail::require(round_duration_s_ > 0.0, "carbon.round_duration_s: must be positive");
    for (std::size_t i = 0; i < steps_.size(); ++i) {
      detail::require(steps_[i].intensity > 0.0 && std::isfinite(steps_[i].intensity),
                      "carbon schedule: intensities must be positive");
      detail::require(i == 0 || steps_[i].start_time_s > steps_[i - 1].start_time_s,
                      "carbon schedule: steps must be sorted by start time");
    }
  }

 private:
  std::size_t entity_ = 0;
  std::vector<IntensityStep> steps_;
  double round_duration_s_ = 60.0;
  double start_time_s_ = 0.0;
};

/// Reads "entity_id,start_time_s,intensity_kg_per_kwh" rows (header
/// required) into per-entity step lists, sorted by start time.
inline std::map<std::size_t, std::vector<IntensityStep>> load_intensity_csv(const std::string& path) {
  const auto rows = csv::read_file(path);
  detail::require(!rows.empty(), path + ": missing header row");
  const std::vector<std::string> expected{"entity_id", "start_time_s", "intensity_kg_per_kwh"};
  detail::require(rows.front() == expected,
                  path + ": header must be entity_id,start_time_s,intensity_kg_per_kwh");
  std::map<std::size_t, std::vector<IntensityStep>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    const std::string ctx = path + ":" + std::to_string(r + 1);
    detail::require(row.size() == 3, ctx + ": expected 3 fields");
    const long long entity = csv::parse_integer(row[0], ctx);
    detail::require(entity >= 0, ctx + ": entity_id must be >= 0");
    out[static_cast<std::size_t>(entity)].push_back(
        {csv::parse_double(row[1], ctx), csv::parse_double(row[2], ctx)});
  }
  for (auto& [entity, steps] : out) {
    std::stable_sort(steps.begin(), steps.end(),
                     [](const IntensityStep& a, const IntensityStep& b) { return a.start_time_s < b.start_time_s; });
  }
  return out;
}

struct LedgerEntry {
  std::size_t round = 0;
  double energy_j = 0.0;
  double intensity = 0.0;
  double delta_c_kg = 0.0;
};

/// Cumulative emissions of one entity, C_k(t_i) = E_{k,i} I_{k,i} + C_k(t_{i-1}).
struct CarbonLedger {
  std::size_t entity = 0;
  double cumulative_kg = 0.0;
  std::vector<LedgerEntry> entries;
};

/// Appends round `round` and returns its emissions E * I / 3.6e6.
inline double ledger_update(CarbonLedger& ledger, std::size_t round, double energy_j,
                            const CarbonIntensitySchedule& schedule) {
  detail::require(ledger.entries.empty() || round > ledger.entries.back().round,
                  "ledger_update: round " + std::to_string(round) + " is not after round " +
                      (ledger.entries.empty() ? std::string("-") : std::to_string(ledger.entries.back().round)) +
                      " for entity " + std::to_string(ledger.entity));
  detail::require(std::isfinite(energy_j) && energy_j >= 0.0, "ledger_update: energy must be >= 0");
  const double intensity = schedule.intensity_for_round(round);
  const double delta = energy_j * intensity / kJoulePerKwh;
  ledger.cumulative_kg += delta;
  ledger.entries.push_back({round, energy_j, intensity, delta});
  return delta;
}

/// Protocol total: device ledgers (entity >= 1), plus the server ledger
/// (entity 0) for FA only.
inline double total_carbon(std::span<const CarbonLedger> ledgers, Protocol protocol) {
  double total = 0.0;
  for (const auto& l : ledgers) {
    if (l.entity == 0 && protocol == Protocol::cfa) continue;
    for (const auto& e : l.entries) total += e.delta_c_kg;
  }
  return total;
}

}  // namespace flcarbon
