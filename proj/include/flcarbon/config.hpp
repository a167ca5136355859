#pragma once

// JSON configuration files for runs and sweeps. Keys are snake_case and
// mirror the RunConfig / SweepSpec fields; physical quantities carry their
// unit as a key suffix (_j, _bit_per_j, _kg_per_kwh, _kg, _s). Unknown keys
// are rejected with their full key path.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "flcarbon/errors.hpp"
#include "flcarbon/harness.hpp"

namespace flcarbon::config {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace detail {

/// Reads typed fields of one JSON object and remembers which keys were seen.
class ObjectReader {
 public:
  ObjectReader(const json* object, std::string path) : object_(object), path_(std::move(path)) {
    if (object_ && !object_->is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return object_ && object_->contains(key); }

  template <typename T>
  void get(const std::string& key, T& out, bool required = false) {
    seen_.insert(key);
    if (!has(key)) {
      if (required) fail(key_path(key), "required key is missing");
      return;
    }
    out = convert<T>(object_->at(key), key_path(key));
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const json& v = object_->at(key);
    if (v.is_null()) {
      out.reset();
    } else {
      out = convert<T>(v, key_path(key));
    }
  }

  template <typename T>
  void get_list(const std::string& key, std::vector<T>& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const json& v = object_->at(key);
    if (!v.is_array()) fail(key_path(key), "expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(convert<T>(v[i], key_path(key) + "[" + std::to_string(i) + "]"));
    }
  }

  ObjectReader child(const std::string& key) {
    seen_.insert(key);
    return ObjectReader(has(key) ? &object_->at(key) : nullptr, key_path(key));
  }

  void finish() const {
    if (!object_) return;
    for (const auto& item : object_->items()) {
      if (!seen_.count(item.key())) fail(key_path(item.key()), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& message) {
    throw ValidationError("config: " + path + ": " + message);
  }

 private:
  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(path, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(path, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        fail(path, "expected a non-negative integer");
      }
      const auto raw = v.get<std::uint64_t>();
      if (raw > std::numeric_limits<T>::max()) fail(path, "integer out of range");
      return static_cast<T>(raw);
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(path, "expected an integer");
      const auto raw = v.get<std::int64_t>();
      if (raw < std::numeric_limits<T>::min() || raw > std::numeric_limits<T>::max()) {
        fail(path, "integer out of range");
      }
      return static_cast<T>(raw);
    } else if constexpr (std::is_same_v<T, Protocol>) {
      if (!v.is_string()) fail(path, "expected \"fa\" or \"cfa\"");
      const auto s = v.get<std::string>();
      if (s != "fa" && s != "cfa") fail(path, "expected \"fa\" or \"cfa\"");
      return protocol_from_string(s);
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  const json* object_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base_dir) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
  return path.lexically_normal().string();
}

inline void read_run_config(ObjectReader r, RunConfig& c, const std::filesystem::path& base_dir) {
  r.get("protocol", c.protocol);
  r.get("num_devices", c.num_devices);
  r.get("seed", c.seed, /*required=*/true);
  r.get("gamma", c.gamma);
  {
    auto t = r.child("topology");
    t.get("kind", c.topology.kind);
    t.get("degree", c.topology.degree);
    t.finish();
  }
  {
    auto q = r.child("compression");
    q.get("delta", c.compression.delta);
    q.get("n_bits", c.compression.n_bits);
    q.get("n_bits_clear", c.compression.n_bits_clear);
    q.get("identity", c.compression.identity);
    q.finish();
  }
  {
    auto o = r.child("optimizer");
    o.get("learning_rate", c.optimizer.learning_rate);
    o.get("momentum", c.optimizer.momentum);
    o.get("batch_size", c.optimizer.batch_size);
    o.get("local_epochs", c.optimizer.local_epochs);
    o.finish();
  }
  {
    auto a = r.child("architecture");
    a.get("input_dim", c.architecture.input_dim);
    a.get_list("hidden_dims", c.architecture.hidden_dims);
    a.get("n_classes", c.architecture.n_classes);
    a.finish();
  }
  {
    auto d = r.child("dataset");
    d.get("source", c.dataset.source);
    d.get("samples_per_class", c.dataset.samples_per_class);
    d.get("class_separation", c.dataset.class_separation);
    d.get("noise_sigma", c.dataset.noise_sigma);
    d.get("validation_fraction", c.dataset.validation_fraction);
    d.get("csv_path", c.dataset.csv_path);
    d.get("label_column", c.dataset.label_column);
    d.finish();
    c.dataset.csv_path = resolve_path(c.dataset.csv_path, base_dir);
  }
  {
    auto e = r.child("device_energy");
    e.get("e_comp_j", c.device_energy.e_comp_j);
    e.get("e_q_min_j", c.device_energy.e_q_min_j);
    e.get("e_q_max_j", c.device_energy.e_q_max_j);
    e.get("e_sleep_j", c.device_energy.e_sleep_j);
    e.get("e_global_j", c.device_energy.e_global_j);
    e.finish();
  }
  {
    auto e = r.child("ps_energy");
    e.get("e_global_j", c.ps_energy.e_global_j);
    e.get("e_sleep_j", c.ps_energy.e_sleep_j);
    e.finish();
  }
  {
    auto l = r.child("links");
    l.get("ee_downlink_bit_per_j", c.links.ee_downlink);
    l.get("ee_uplink_bit_per_j", c.links.ee_uplink);
    l.get("ee_sidelink_bit_per_j", c.links.ee_sidelink);
    l.finish();
  }
  {
    auto k = r.child("carbon");
    k.get("ps_intensity_kg_per_kwh", c.carbon.ps_intensity);
    k.get("device_intensity_kg_per_kwh", c.carbon.device_intensity);
    k.get("schedule_csv", c.carbon.schedule_csv);
    k.get("round_duration_s", c.carbon.round_duration_s);
    k.get("start_time_s", c.carbon.start_time_s);
    k.finish();
    c.carbon.schedule_csv = resolve_path(c.carbon.schedule_csv, base_dir);
  }
  {
    auto s = r.child("stopping");
    if (r.has("stopping")) c.stopping = {};
    s.get("max_rounds", c.stopping.max_rounds);
    s.get("carbon_budget_kg", c.stopping.carbon_budget_kg);
    s.get("target_accuracy", c.stopping.target_accuracy);
    s.finish();
  }
  r.finish();
}

template <typename T>
ordered_json optional_json(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

}  // namespace detail

/// Parses and validates a run configuration. Relative file paths inside the
/// document are resolved against base_dir.
inline RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir = {}) {
  RunConfig c;
  detail::read_run_config(detail::ObjectReader(&doc, ""), c, base_dir);
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

/// Normalized form with every field present.
inline ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["protocol"] = to_string(c.protocol);
  j["num_devices"] = c.num_devices;
  j["seed"] = c.seed;
  j["gamma"] = c.gamma;
  j["topology"] = {{"kind", c.topology.kind}, {"degree", c.topology.degree}};
  j["compression"] = {{"delta", c.compression.delta},
                      {"n_bits", c.compression.n_bits},
                      {"n_bits_clear", c.compression.n_bits_clear},
                      {"identity", c.compression.identity}};
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"momentum", c.optimizer.momentum},
                    {"batch_size", c.optimizer.batch_size},
                    {"local_epochs", c.optimizer.local_epochs}};
  j["architecture"] = {{"input_dim", c.architecture.input_dim},
                       {"hidden_dims", c.architecture.hidden_dims},
                       {"n_classes", c.architecture.n_classes}};
  j["dataset"] = {{"source", c.dataset.source},
                  {"samples_per_class", c.dataset.samples_per_class},
                  {"class_separation", c.dataset.class_separation},
                  {"noise_sigma", c.dataset.noise_sigma},
                  {"validation_fraction", c.dataset.validation_fraction},
                  {"csv_path", c.dataset.csv_path},
                  {"label_column", c.dataset.label_column}};
  j["device_energy"] = {{"e_comp_j", c.device_energy.e_comp_j},
                        {"e_q_min_j", c.device_energy.e_q_min_j},
                        {"e_q_max_j", c.device_energy.e_q_max_j},
                        {"e_sleep_j", c.device_energy.e_sleep_j},
                        {"e_global_j", c.device_energy.e_global_j}};
  j["ps_energy"] = {{"e_global_j", c.ps_energy.e_global_j}, {"e_sleep_j", c.ps_energy.e_sleep_j}};
  j["links"] = {{"ee_downlink_bit_per_j", c.links.ee_downlink},
                {"ee_uplink_bit_per_j", c.links.ee_uplink},
                {"ee_sidelink_bit_per_j", c.links.ee_sidelink}};
  j["carbon"] = {{"ps_intensity_kg_per_kwh", c.carbon.ps_intensity},
                 {"device_intensity_kg_per_kwh", c.carbon.device_intensity},
                 {"schedule_csv", c.carbon.schedule_csv},
                 {"round_duration_s", c.carbon.round_duration_s},
                 {"start_time_s", c.carbon.start_time_s}};
  j["stopping"] = {{"max_rounds", detail::optional_json(c.stopping.max_rounds)},
                   {"carbon_budget_kg", detail::optional_json(c.stopping.carbon_budget_kg)},
                   {"target_accuracy", detail::optional_json(c.stopping.target_accuracy)}};
  return j;
}

/// A sweep document has "base" (a run config) and "axes"; a plain run config
/// is accepted as a sweep with no axes.
inline SweepSpec parse_sweep_spec(const json& doc, const std::filesystem::path& base_dir = {}) {
  SweepSpec spec;
  if (!doc.is_object() || !doc.contains("base")) {
    spec.base = parse_run_config(doc, base_dir);
    return spec;
  }
  detail::ObjectReader r(&doc, "");
  {
    auto b = r.child("base");
    detail::read_run_config(b, spec.base, base_dir);
  }
  {
    auto a = r.child("axes");
    a.get_list("protocol", spec.axes.protocol);
    a.get_list("delta", spec.axes.delta);
    a.get_list("n_bits", spec.axes.n_bits);
    a.get_list("ee_com_bit_per_j", spec.axes.ee_com);
    a.get_list("ps_intensity_kg_per_kwh", spec.axes.ps_intensity);
    a.get_list("device_intensity_kg_per_kwh", spec.axes.device_intensity);
    a.finish();
  }
  r.get("repetitions", spec.repetitions);
  r.get("max_grid_points", spec.max_grid_points);
  r.finish();
  try {
    spec.base.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config: base.") + e.what());
  }
  flcarbon::detail::require(spec.repetitions >= 1, "config: repetitions: must be >= 1");
  return spec;
}

inline ordered_json to_json(const SweepSpec& s) {
  ordered_json axes = ordered_json::object();
  std::vector<std::string> protocols;
  for (Protocol p : s.axes.protocol) protocols.push_back(to_string(p));
  axes["protocol"] = protocols;
  axes["delta"] = s.axes.delta;
  axes["n_bits"] = s.axes.n_bits;
  axes["ee_com_bit_per_j"] = s.axes.ee_com;
  axes["ps_intensity_kg_per_kwh"] = s.axes.ps_intensity;
  axes["device_intensity_kg_per_kwh"] = s.axes.device_intensity;
  ordered_json j;
  j["base"] = to_json(s.base);
  j["axes"] = axes;
  j["repetitions"] = s.repetitions;
  j["max_grid_points"] = s.max_grid_points;
  return j;
}

inline json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path.string() + ": " + e.what());
  }
}

}  // namespace flcarbon::config
