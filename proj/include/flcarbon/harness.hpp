#pragma once

// Experiment orchestration: lock-step rounds of FA or CFA with per-round
// energy and carbon bookkeeping, stopping on a carbon budget, a target
// accuracy or a round cap, and Cartesian sweeps over configuration axes.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "flcarbon/compression.hpp"
#include "flcarbon/energy.hpp"
#include "flcarbon/errors.hpp"
#include "flcarbon/model.hpp"
#include "flcarbon/protocol_cfa.hpp"
#include "flcarbon/protocol_fa.hpp"
#include "flcarbon/rng.hpp"

namespace flcarbon {

struct TopologySpec {
  std::string kind = "full";  ///< full | ring | random_regular
  std::size_t degree = 0;     ///< random_regular only

  bool operator==(const TopologySpec&) const = default;
};

/// Where the training data comes from. Input dimension and class count are
/// taken from the architecture.
struct DatasetSpec {
  std::string source = "synthetic";  ///< synthetic | csv
  std::size_t samples_per_class = 375;
  double class_separation = 3.0;
  double noise_sigma = 1.0;
  double validation_fraction = 0.2;
  std::string csv_path;
  std::string label_column = "label";

  bool operator==(const DatasetSpec&) const = default;
};

struct CarbonSpec {
  double ps_intensity = 0.449;      ///< kgCO2-eq/kWh, entity 0
  double device_intensity = 0.449;  ///< kgCO2-eq/kWh, entities 1..K
  std::string schedule_csv;         ///< optional per-entity stepwise overrides
  double round_duration_s = 60.0;
  double start_time_s = 0.0;

  bool operator==(const CarbonSpec&) const = default;
};

struct StoppingRule {
  std::optional<std::size_t> max_rounds;
  std::optional<double> carbon_budget_kg;
  std::optional<double> target_accuracy;

  bool operator==(const StoppingRule&) const = default;
};

struct RunConfig {
  Protocol protocol = Protocol::fa;
  std::size_t num_devices = 10;
  TopologySpec topology;
  CompressionPolicy compression;
  OptimizerConfig optimizer;
  MlpArchitecture architecture{32, {64}, 10};
  DatasetSpec dataset;
  EnergyProfile device_energy;
  ServerEnergyProfile ps_energy;
  LinkEfficiencies links;
  CarbonSpec carbon;
  double gamma = 0.01;
  std::uint64_t seed = 0;
  StoppingRule stopping{100, std::nullopt, std::nullopt};

  void validate() const {
    detail::require(num_devices >= 1, "num_devices: must be >= 1");
    if (protocol == Protocol::cfa) {
      detail::require(num_devices >= 2, "num_devices: cfa needs at least two devices");
    }
    detail::require(topology.kind == "full" || topology.kind == "ring" || topology.kind == "random_regular",
                    "topology.kind: expected full, ring or random_regular");
    if (topology.kind == "random_regular") {
      detail::require(topology.degree >= 1 && topology.degree < num_devices,
                      "topology.degree: must be in [1, num_devices - 1]");
      detail::require((topology.degree * num_devices) % 2 == 0,
                      "topology.degree: degree * num_devices must be even");
    }
    compression.validate();
    optimizer.validate();
    architecture.validate();
    device_energy.validate();
    ps_energy.validate();
    links.validate();
    detail::require(gamma > 0.0 && gamma <= 1.0, "gamma: must be in (0, 1]");
    detail::require(carbon.ps_intensity > 0.0 && carbon.device_intensity > 0.0,
                    "carbon: intensities must be > 0");
    detail::require(carbon.round_duration_s > 0.0, "carbon.round_duration_s: must be > 0");
    detail::require(stopping.max_rounds || stopping.carbon_budget_kg,
                    "stopping: need max_rounds or carbon_budget_kg");
    if (stopping.carbon_budget_kg) {
      detail::require(*stopping.carbon_budget_kg >= 0.0, "stopping.carbon_budget_kg: must be >= 0");
    }
    if (stopping.target_accuracy) {
      detail::require(*stopping.target_accuracy >= 0.0 && *stopping.target_accuracy <= 1.0,
                      "stopping.target_accuracy: must be in [0, 1]");
    }
    detail::require(dataset.source == "synthetic" || dataset.source == "csv",
                    "dataset.source: expected synthetic or csv");
    detail::require(dataset.validation_fraction > 0.0 && dataset.validation_fraction < 1.0,
                    "dataset.validation_fraction: must be in (0, 1)");
    if (dataset.source == "csv") {
      detail::require(!dataset.csv_path.empty(), "dataset.csv_path: required for csv source");
    } else {
      detail::require(dataset.samples_per_class > 0, "dataset.samples_per_class: must be positive");
      detail::require(dataset.noise_sigma > 0.0, "dataset.noise_sigma: must be > 0");
      detail::require(dataset.class_separation >= 0.0, "dataset.class_separation: must be >= 0");
      const double total = static_cast<double>(dataset.samples_per_class * architecture.n_classes);
      const double train = total - std::clamp(std::round(dataset.validation_fraction * total), 1.0, total - 1.0);
      detail::require(train >= static_cast<double>(num_devices),
                      "dataset: fewer training samples than devices");
    }
  }

  bool operator==(const RunConfig&) const = default;
};

/// One row of the per-round log.
struct EntityRecord {
  std::string entity;  ///< "ps" or "device_<k>"
  double loss = 0.0;
  double accuracy = 0.0;
  std::uint64_t bits_tx = 0;
  std::uint64_t bits_rx = 0;
  double energy_j = 0.0;
  double delta_c_kg = 0.0;
  double c_tot_kg = 0.0;  ///< this entity's cumulative emissions
};

struct RoundLog {
  std::size_t round = 0;
  std::vector<EntityRecord> entities;
  double mean_loss = 0.0;
  double mean_accuracy = 0.0;
  double min_accuracy = 0.0;
  double max_accuracy = 0.0;
  std::uint64_t bits_total = 0;  ///< bits transmitted by all entities this round
  double energy_j = 0.0;
  double delta_c_kg = 0.0;
  double c_tot_kg = 0.0;  ///< protocol total so far
};

enum class StopReason { carbon_budget, target_accuracy, max_rounds, diverged };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::carbon_budget: return "carbon_budget";
    case StopReason::target_accuracy: return "target_accuracy";
    case StopReason::max_rounds: return "max_rounds";
    case StopReason::diverged: return "diverged";
  }
  return "unknown";
}

struct RunSummary {
  Protocol protocol = Protocol::fa;
  std::uint64_t seed = 0;
  std::size_t rounds_executed = 0;
  StopReason stop_reason = StopReason::max_rounds;
  std::string error;
  double final_loss = 0.0;
  double final_accuracy = 0.0;  ///< mean over devices for CFA
  double min_accuracy = 0.0;
  double max_accuracy = 0.0;
  bool target_reached = false;
  double c_tot_kg = 0.0;
  double c_devices_kg = 0.0;
  double c_ps_kg = 0.0;
  std::optional<double> budget_overshoot_kg;
  double energy_total_j = 0.0;
  std::uint64_t bits_total = 0;
  std::size_t n_params = 0;
  std::uint64_t model_bits = 0;
};

struct RunResult {
  std::vector<RoundLog> rounds;
  std::vector<CarbonLedger> ledgers;  ///< entity 0 (server, FA only) then devices
  RunSummary summary;
};

enum class BudgetCheck { proceed, stop };

/// Stop once the protocol total has reached the budget.
inline BudgetCheck check_budget(std::span<const CarbonLedger> ledgers, Protocol protocol,
                                double budget_kg) {
  detail::require(budget_kg >= 0.0, "check_budget: budget must be >= 0");
  return total_carbon(ledgers, protocol) >= budget_kg ? BudgetCheck::stop : BudgetCheck::proceed;
}

/// Intensity schedules for entity 0 (server) and 1..K, constants from the
/// config overridden per entity by the optional CSV.
inline std::vector<CarbonIntensitySchedule> make_schedules(const RunConfig& config) {
  std::map<std::size_t, std::vector<IntensityStep>> overrides;
  if (!config.carbon.schedule_csv.empty()) overrides = load_intensity_csv(config.carbon.schedule_csv);
  for (const auto& [entity, steps] : overrides) {
    detail::require(entity <= config.num_devices,
                    "carbon.schedule_csv: entity_id " + std::to_string(entity) + " exceeds num_devices");
  }
  std::vector<CarbonIntensitySchedule> out;
  for (std::size_t e = 0; e <= config.num_devices; ++e) {
    auto it = overrides.find(e);
    std::vector<IntensityStep> steps =
        it != overrides.end()
            ? it->second
            : std::vector<IntensityStep>{{0.0, e == 0 ? config.carbon.ps_intensity : config.carbon.device_intensity}};
    out.emplace_back(e, std::move(steps), config.carbon.round_duration_s, config.carbon.start_time_s);
  }
  return out;
}

/// Training and validation data for a run.
inline TrainValidation make_data(const RunConfig& config) {
  const DatasetSpec& d = config.dataset;
  if (d.source == "csv") {
    Dataset all = load_csv_dataset(d.csv_path, config.architecture.n_classes, d.label_column);
    detail::require(all.input_dim == config.architecture.input_dim,
                    "dataset: csv has " + std::to_string(all.input_dim) +
                        " feature columns, architecture.input_dim is " +
                        std::to_string(config.architecture.input_dim));
    return split_train_validation(all, d.validation_fraction, config.seed);
  }
  SyntheticSpec spec{config.architecture.n_classes, config.architecture.input_dim, d.samples_per_class,
                     d.class_separation, d.noise_sigma, d.validation_fraction};
  return generate_synthetic_dataset(spec, config.seed);
}

inline Topology make_topology(const RunConfig& config) {
  if (config.topology.kind == "ring") return Topology::ring(config.num_devices);
  if (config.topology.kind == "random_regular") {
    return Topology::random_regular(config.num_devices, config.topology.degree, config.seed);
  }
  return Topology::fully_connected(config.num_devices);
}

namespace detail {

inline std::string device_name(std::size_t k) { return "device_" + std::to_string(k); }

struct StopDecision {
  bool stop = false;
  StopReason reason = StopReason::max_rounds;
};

inline StopDecision should_stop(const StoppingRule& rule, double c_tot, double accuracy,
                                std::size_t rounds_done) {
  if (rule.carbon_budget_kg && c_tot >= *rule.carbon_budget_kg) return {true, StopReason::carbon_budget};
  if (rule.target_accuracy && accuracy >= *rule.target_accuracy) return {true, StopReason::target_accuracy};
  if (rule.max_rounds && rounds_done >= *rule.max_rounds) return {true, StopReason::max_rounds};
  return {};
}

}  // namespace detail

using RoundObserver = std::function<void(const RoundLog&)>;

/// Runs the configured protocol until the first satisfied stopping condition
/// (checked before every round, in the order carbon budget, target accuracy,
/// round cap). A diverging local optimizer ends the run with
/// StopReason::diverged and the rounds completed so far.
inline RunResult run(const RunConfig& config, const RoundObserver& observer = {}) {
  config.validate();
  const std::size_t k_devices = config.num_devices;
  const Mlp model(config.architecture);
  const std::size_t n_params = model.n_params();
  const TrainValidation data = make_data(config);
  std::vector<DatasetPartition> shards = partition_iid(data.train, k_devices, config.seed);
  const ParameterVector w0 = model.initialize(derive_seed(config.seed, {stream::init}));
  const std::vector<CarbonIntensitySchedule> schedules = make_schedules(config);
  const CompressionPolicy& policy = config.compression;
  const std::uint64_t b_w = model_bits(n_params, policy.n_bits_clear);
  const std::uint64_t up_bits = payload_bits(policy, n_params);
  const bool is_fa = config.protocol == Protocol::fa;

  RunResult result;
  RunSummary& summary = result.summary;
  summary.protocol = config.protocol;
  summary.seed = config.seed;
  summary.n_params = n_params;
  summary.model_bits = b_w;
  if (is_fa) result.ledgers.push_back({0, 0.0, {}});
  for (std::size_t k = 1; k <= k_devices; ++k) result.ledgers.push_back({k, 0.0, {}});

  // Protocol state.
  std::vector<FaDeviceState> fa_devices;
  FaServerState server;
  std::vector<CfaDeviceState> cfa_devices;
  Topology topology;
  MixingMatrix omega;
  if (is_fa) {
    server.W_global = w0;
    server.weights = FaServerState::size_weights(shards);
    for (std::size_t k = 0; k < k_devices; ++k) fa_devices.push_back({k + 1, w0, std::move(shards[k])});
  } else {
    topology = make_topology(config);
    omega = build_mixing_matrix(topology);
    for (std::size_t k = 0; k < k_devices; ++k) {
      cfa_devices.push_back(CfaDeviceState::initial(k + 1, w0, std::move(shards[k]), config.gamma));
    }
  }

  // Per-round energies are fixed by the (static) policies and topology.
  const std::vector<CompressionPolicy> all_policies(k_devices, policy);
  std::vector<double> device_energy(k_devices);
  double server_energy = 0.0;
  if (is_fa) {
    const double e = fa_device_energy(config.device_energy, config.links, policy, n_params).total();
    std::fill(device_energy.begin(), device_energy.end(), e);
    server_energy = flcarbon::ps_energy(config.ps_energy, config.links, all_policies, n_params,
                                        policy.n_bits_clear).total();
  } else {
    for (std::size_t k = 0; k < k_devices; ++k) {
      const std::vector<CompressionPolicy> nbr(topology.degree(k), policy);
      device_energy[k] = cfa_device_energy(config.device_energy, config.links, policy, nbr, n_params).total();
    }
  }

  const Evaluation initial = model.evaluate(w0, data.validation);
  summary.final_loss = initial.loss;
  summary.final_accuracy = summary.min_accuracy = summary.max_accuracy = initial.accuracy;

  double c_tot = 0.0;
  for (std::size_t round = 1;; ++round) {
    const auto decision = detail::should_stop(config.stopping, c_tot, summary.final_accuracy, round - 1);
    if (decision.stop) {
      summary.stop_reason = decision.reason;
      break;
    }
    // Termination guard for budget-only runs that emit nothing.
    if (round == 2 && !config.stopping.max_rounds && c_tot <= 0.0) {
      throw ValidationError("stopping: carbon budget can never be reached (zero emissions per round)");
    }

    RoundLog log;
    log.round = round;
    std::vector<Evaluation> evals;
    try {
      if (is_fa) {
        std::vector<Payload> payloads;
        payloads.reserve(k_devices);
        for (std::size_t k = 0; k < k_devices; ++k) {
          RngStream rng = make_stream(config.seed, {stream::local_round, round, k + 1});
          payloads.push_back(fa_device_round(model, fa_devices[k], policy, config.optimizer, rng).update);
        }
        server.W_global = fa_server_aggregate(server, payloads);
        if (!server.W_global.all_finite()) {
          throw DivergenceError("aggregation produced a non-finite global model");
        }
        fa_broadcast(server, fa_devices, policy.n_bits_clear);
        evals.assign(k_devices, model.evaluate(server.W_global, data.validation));
      } else {
        std::vector<DeviceStep> steps;
        steps.reserve(k_devices);
        for (std::size_t k = 0; k < k_devices; ++k) {
          RngStream rng = make_stream(config.seed, {stream::local_round, round, k + 1});
          steps.push_back(cfa_local_step(model, cfa_devices[k], policy, config.optimizer, rng));
        }
        cfa_apply_round(cfa_devices, steps, omega);
        for (const auto& d : cfa_devices) {
          if (!d.W.all_finite()) {
            throw DivergenceError("consensus step produced non-finite parameters on device " +
                                  std::to_string(d.device_id));
          }
          evals.push_back(model.evaluate(d.W, data.validation));
        }
      }
    } catch (const DivergenceError& e) {
      summary.stop_reason = StopReason::diverged;
      summary.error = e.what();
      break;
    }

    // Energy and carbon.
    if (is_fa) {
      CarbonLedger& ps = result.ledgers[0];
      const double dc = ledger_update(ps, round, server_energy, schedules[0]);
      log.entities.push_back({"ps", evals[0].loss, evals[0].accuracy, b_w, up_bits * k_devices,
                              server_energy, dc, ps.cumulative_kg});
      log.bits_total += b_w;
      log.energy_j += server_energy;
      log.delta_c_kg += dc;
    }
    const std::size_t first_device = is_fa ? 1 : 0;
    for (std::size_t k = 0; k < k_devices; ++k) {
      CarbonLedger& ledger = result.ledgers[first_device + k];
      const double dc = ledger_update(ledger, round, device_energy[k], schedules[k + 1]);
      const std::uint64_t rx = is_fa ? b_w : up_bits * topology.degree(k);
      log.entities.push_back({detail::device_name(k + 1), evals[k].loss, evals[k].accuracy, up_bits, rx,
                              device_energy[k], dc, ledger.cumulative_kg});
      log.bits_total += up_bits;
      log.energy_j += device_energy[k];
      log.delta_c_kg += dc;
    }
    c_tot = total_carbon(result.ledgers, config.protocol);
    log.c_tot_kg = c_tot;

    double loss_sum = 0.0, acc_sum = 0.0;
    log.min_accuracy = std::numeric_limits<double>::infinity();
    log.max_accuracy = -std::numeric_limits<double>::infinity();
    for (const auto& e : evals) {
      loss_sum += e.loss;
      acc_sum += e.accuracy;
      log.min_accuracy = std::min(log.min_accuracy, e.accuracy);
      log.max_accuracy = std::max(log.max_accuracy, e.accuracy);
    }
    log.mean_loss = loss_sum / static_cast<double>(k_devices);
    log.mean_accuracy = acc_sum / static_cast<double>(k_devices);

    summary.rounds_executed = round;
    summary.final_loss = log.mean_loss;
    summary.final_accuracy = log.mean_accuracy;
    summary.min_accuracy = log.min_accuracy;
    summary.max_accuracy = log.max_accuracy;
    summary.energy_total_j += log.energy_j;
    summary.bits_total += log.bits_total;
    result.rounds.push_back(std::move(log));
    if (observer) observer(result.rounds.back());
  }

  summary.c_tot_kg = c_tot;
  for (const auto& l : result.ledgers) {
    (l.entity == 0 ? summary.c_ps_kg : summary.c_devices_kg) += l.cumulative_kg;
  }
  if (config.stopping.target_accuracy) {
    summary.target_reached = summary.final_accuracy >= *config.stopping.target_accuracy;
  }
  if (summary.stop_reason == StopReason::carbon_budget) {
    summary.budget_overshoot_kg = c_tot - *config.stopping.carbon_budget_kg;
  }
  return result;
}

struct SweepAxes {
  std::vector<Protocol> protocol;
  std::vector<double> delta;
  std::vector<int> n_bits;
  std::vector<double> ee_com;            ///< sets all three link efficiencies
  std::vector<double> ps_intensity;
  std::vector<double> device_intensity;

  bool empty() const {
    return protocol.empty() && delta.empty() && n_bits.empty() && ee_com.empty() &&
           ps_intensity.empty() && device_intensity.empty();
  }

  /// Names of the non-empty axes in iteration order (last varies fastest).
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    if (!protocol.empty()) out.push_back("protocol");
    if (!delta.empty()) out.push_back("delta");
    if (!n_bits.empty()) out.push_back("n_bits");
    if (!ee_com.empty()) out.push_back("ee_com_bit_per_j");
    if (!ps_intensity.empty()) out.push_back("ps_intensity_kg_per_kwh");
    if (!device_intensity.empty()) out.push_back("device_intensity_kg_per_kwh");
    return out;
  }

  std::size_t cells() const {
    std::size_t n = 1;
    for (std::size_t s : {protocol.size(), delta.size(), n_bits.size(), ee_com.size(),
                          ps_intensity.size(), device_intensity.size()}) {
      if (s) n *= s;
    }
    return n;
  }

  bool operator==(const SweepAxes&) const = default;
};

struct SweepSpec {
  RunConfig base;
  SweepAxes axes;
  std::size_t repetitions = 1;
  std::size_t max_grid_points = 10000;

  bool operator==(const SweepSpec&) const = default;
};

struct SweepPoint {
  std::size_t index = 0;       ///< flat position, cell * repetitions + repetition
  std::size_t cell = 0;
  std::size_t repetition = 0;
  std::vector<std::pair<std::string, std::string>> axis_values;
  RunConfig config;
};

/// Seed of grid point `index`: base XOR mix64(index * golden gamma), so
/// point 0 keeps the base seed.
inline std::uint64_t sweep_seed(std::uint64_t base_seed, std::size_t index) {
  return base_seed ^ mix64(static_cast<std::uint64_t>(index) * kGoldenGamma);
}

/// Expands the Cartesian grid; every point is validated.
inline std::vector<SweepPoint> expand_sweep(const SweepSpec& spec) {
  detail::require(spec.repetitions >= 1, "repetitions: must be >= 1");
  const std::size_t cells = spec.axes.cells();
  detail::require(cells <= spec.max_grid_points && cells * spec.repetitions <= spec.max_grid_points,
                  "sweep: grid of " + std::to_string(cells * spec.repetitions) +
                      " runs exceeds max_grid_points " + std::to_string(spec.max_grid_points));
  const SweepAxes& ax = spec.axes;
  std::vector<SweepPoint> out;
  out.reserve(cells * spec.repetitions);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    RunConfig cfg = spec.base;
    std::vector<std::pair<std::string, std::string>> values;
    // Mixed-radix decode with the last axis varying fastest.
    std::size_t rem = cell;
    std::vector<std::size_t> digits;
    for (std::size_t size : {ax.device_intensity.size(), ax.ps_intensity.size(), ax.ee_com.size(),
                             ax.n_bits.size(), ax.delta.size(), ax.protocol.size()}) {
      if (size == 0) {
        digits.push_back(0);
        continue;
      }
      digits.push_back(rem % size);
      rem /= size;
    }
    std::reverse(digits.begin(), digits.end());  // protocol first
    if (!ax.protocol.empty()) {
      cfg.protocol = ax.protocol[digits[0]];
      values.emplace_back("protocol", to_string(cfg.protocol));
    }
    if (!ax.delta.empty()) {
      cfg.compression.delta = ax.delta[digits[1]];
      values.emplace_back("delta", csv::format_double(cfg.compression.delta));
    }
    if (!ax.n_bits.empty()) {
      cfg.compression.n_bits = ax.n_bits[digits[2]];
      values.emplace_back("n_bits", std::to_string(cfg.compression.n_bits));
    }
    if (!ax.ee_com.empty()) {
      cfg.links = LinkEfficiencies::uniform(ax.ee_com[digits[3]]);
      values.emplace_back("ee_com_bit_per_j", csv::format_double(ax.ee_com[digits[3]]));
    }
    if (!ax.ps_intensity.empty()) {
      cfg.carbon.ps_intensity = ax.ps_intensity[digits[4]];
      values.emplace_back("ps_intensity_kg_per_kwh", csv::format_double(cfg.carbon.ps_intensity));
    }
    if (!ax.device_intensity.empty()) {
      cfg.carbon.device_intensity = ax.device_intensity[digits[5]];
      values.emplace_back("device_intensity_kg_per_kwh", csv::format_double(cfg.carbon.device_intensity));
    }
    for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
      SweepPoint p;
      p.index = cell * spec.repetitions + rep;
      p.cell = cell;
      p.repetition = rep;
      p.axis_values = values;
      p.config = cfg;
      p.config.seed = sweep_seed(spec.base.seed, p.index);
      try {
        p.config.validate();
      } catch (const ValidationError& e) {
        throw ValidationError("sweep point " + std::to_string(p.index) + ": " + e.what());
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

struct SweepCellResult {
  SweepPoint point;
  RunResult result;
};

/// Runs every grid point, up to `jobs` at a time. Output order and content
/// do not depend on `jobs`.
inline std::vector<SweepCellResult> sweep(const SweepSpec& spec, std::size_t jobs = 1) {
  std::vector<SweepPoint> points = expand_sweep(spec);
  std::vector<SweepCellResult> results(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        results[i].result = run(points[i].config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
      results[i].point = std::move(points[i]);
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, points.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace flcarbon
