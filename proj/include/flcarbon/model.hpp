#pragma once

// Desk-scale learning substrate: parameter vectors, a ReLU multilayer
// perceptron with softmax cross-entropy, synthetic Gaussian-blob data, IID
// sharding, and the on-device SGD-with-momentum optimizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flcarbon/csv.hpp"
#include "flcarbon/errors.hpp"
#include "flcarbon/rng.hpp"

namespace flcarbon {

/// Flat vector of model parameters. Every protocol and compressor works on
/// this representation.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::size_t n_params, double fill = 0.0) : values_(n_params, fill) {}
  explicit ParameterVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  const double& operator[](std::size_t i) const { return values_[i]; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  double norm2() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

  /// this += alpha * x
  ParameterVector& axpy(double alpha, const ParameterVector& x) {
    check_size(x);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += alpha * x.values_[i];
    return *this;
  }

  ParameterVector& operator+=(const ParameterVector& x) {
    check_size(x);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += x.values_[i];
    return *this;
  }

  ParameterVector& operator-=(const ParameterVector& x) {
    check_size(x);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= x.values_[i];
    return *this;
  }

  friend ParameterVector operator+(ParameterVector a, const ParameterVector& b) { return a += b; }
  friend ParameterVector operator-(ParameterVector a, const ParameterVector& b) { return a -= b; }

  bool operator==(const ParameterVector&) const = default;

 private:
  void check_size(const ParameterVector& x) const {
    if (x.size() != size()) {
      throw ValidationError("parameter vector length mismatch: " + std::to_string(size()) +
                            " vs " + std::to_string(x.size()));
    }
  }

  std::vector<double> values_;
};

struct MlpArchitecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t n_classes = 2;

  /// Layer widths including input and output.
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_dim};
    w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
    w.push_back(n_classes);
    return w;
  }

  std::size_t n_params() const {
    const auto w = widths();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l] * w[l + 1] + w[l + 1];
    return n;
  }

  void validate() const {
    detail::require(input_dim > 0, "architecture.input_dim: must be positive");
    detail::require(n_classes >= 2, "architecture.n_classes: must be >= 2");
    for (std::size_t h : hidden_dims) {
      detail::require(h > 0, "architecture.hidden_dims: entries must be positive");
    }
  }

  bool operator==(const MlpArchitecture&) const = default;
};

/// Row-major feature matrix with integer class labels.
struct Dataset {
  std::size_t input_dim = 0;
  std::size_t n_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * input_dim, input_dim);
  }

  void push_back(std::span<const double> x, int label) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out{input_dim, n_classes, {}, {}};
    out.features.reserve(rows.size() * input_dim);
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(row(r), labels[r]);
    return out;
  }

  void validate() const {
    detail::require(features.size() == labels.size() * input_dim,
                    "dataset: feature matrix does not match label count");
    for (int y : labels) {
      detail::require(y >= 0 && static_cast<std::size_t>(y) < n_classes,
                      "dataset: label out of range [0, n_classes)");
    }
  }

  bool operator==(const Dataset&) const = default;
};

/// Shard held by one device. Device ids start at 1; 0 is the parameter server.
struct DatasetPartition {
  std::size_t owner = 0;
  Dataset data;
};

struct TrainValidation {
  Dataset train;
  Dataset validation;
};

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t local_epochs = 1;

  void validate() const {
    detail::require(std::isfinite(learning_rate) && learning_rate >= 0.0,
                    "optimizer.learning_rate: must be finite and >= 0");
    detail::require(momentum >= 0.0 && momentum < 1.0, "optimizer.momentum: must be in [0, 1)");
    detail::require(batch_size > 0, "optimizer.batch_size: must be positive");
    detail::require(local_epochs > 0, "optimizer.local_epochs: must be positive");
  }

  bool operator==(const OptimizerConfig&) const = default;
};

struct SyntheticSpec {
  std::size_t n_classes = 10;
  std::size_t input_dim = 32;
  std::size_t samples_per_class = 375;
  double class_separation = 3.0;
  double noise_sigma = 1.0;
  double validation_fraction = 0.2;

  bool operator==(const SyntheticSpec&) const = default;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct LossGradient {
  double loss = 0.0;
  ParameterVector gradient;
};

/// ReLU MLP with a linear output layer feeding softmax cross-entropy.
/// Parameters are laid out layer by layer: weights [fan_out][fan_in] then
/// biases [fan_out].
class Mlp {
 public:
  explicit Mlp(MlpArchitecture arch) : arch_(std::move(arch)), widths_(arch_.widths()) {
    arch_.validate();
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      offsets_.push_back(off);
      off += widths_[l] * widths_[l + 1] + widths_[l + 1];
    }
  }

  const MlpArchitecture& architecture() const noexcept { return arch_; }
  std::size_t n_params() const { return arch_.n_params(); }

  /// Glorot-uniform weights, zero biases.
  ParameterVector initialize(std::uint64_t seed) const {
    RngStream rng(seed);
    ParameterVector w(n_params());
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const std::size_t fan_in = widths_[l];
      const std::size_t fan_out = widths_[l + 1];
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (std::size_t i = 0; i < fan_in * fan_out; ++i) w[offset + i] = rng.uniform(-limit, limit);
      offset += fan_in * fan_out + fan_out;
    }
    return w;
  }

  /// Output logits for one sample.
  std::vector<double> logits(const ParameterVector& w, std::span<const double> x) const {
    check(w);
    std::vector<std::vector<double>> act;
    forward(w, x, act);
    return act.back();
  }

  /// Mean cross-entropy over the selected rows.
  double loss(const ParameterVector& w, const Dataset& data, std::span<const std::size_t> rows) const {
    check(w);
    std::vector<std::vector<double>> act;
    double total = 0.0;
    for (std::size_t r : rows) {
      forward(w, data.row(r), act);
      total += cross_entropy(act.back(), data.labels[r]);
    }
    return total / static_cast<double>(rows.size());
  }

  /// Mean cross-entropy over the selected rows and its gradient.
  LossGradient loss_and_gradient(const ParameterVector& w, const Dataset& data,
                                 std::span<const std::size_t> rows) const {
    check(w);
    detail::require(!rows.empty(), "loss_and_gradient: empty batch");
    LossGradient out{0.0, ParameterVector(n_params())};
    std::vector<std::vector<double>> act;
    std::vector<double> delta, prev_delta;
    const double scale = 1.0 / static_cast<double>(rows.size());
    const std::size_t n_layers = widths_.size() - 1;

    for (std::size_t r : rows) {
      forward(w, data.row(r), act);
      const int y = data.labels[r];
      const std::vector<double>& z = act.back();
      out.loss += cross_entropy(z, y);

      // dL/dz for softmax cross-entropy: p - onehot(y).
      const double zmax = *std::max_element(z.begin(), z.end());
      double denom = 0.0;
      delta.resize(z.size());
      for (std::size_t c = 0; c < z.size(); ++c) {
        delta[c] = std::exp(z[c] - zmax);
        denom += delta[c];
      }
      for (std::size_t c = 0; c < z.size(); ++c) delta[c] = delta[c] / denom * scale;
      delta[static_cast<std::size_t>(y)] -= scale;

      for (std::size_t l = n_layers; l-- > 0;) {
        const std::size_t fan_in = widths_[l];
        const std::size_t fan_out = widths_[l + 1];
        const std::size_t w_off = offsets_[l];
        const std::size_t b_off = w_off + fan_in * fan_out;
        const std::vector<double>& a = act[l];
        for (std::size_t o = 0; o < fan_out; ++o) {
          const double d = delta[o];
          if (d == 0.0) continue;
          double* g = &out.gradient[w_off + o * fan_in];
          for (std::size_t i = 0; i < fan_in; ++i) g[i] += d * a[i];
          out.gradient[b_off + o] += d;
        }
        if (l == 0) break;
        prev_delta.assign(fan_in, 0.0);
        for (std::size_t o = 0; o < fan_out; ++o) {
          const double d = delta[o];
          if (d == 0.0) continue;
          const double* wr = &w[w_off + o * fan_in];
          for (std::size_t i = 0; i < fan_in; ++i) prev_delta[i] += wr[i] * d;
        }
        // ReLU derivative on the hidden activation feeding this layer.
        for (std::size_t i = 0; i < fan_in; ++i) {
          if (a[i] <= 0.0) prev_delta[i] = 0.0;
        }
        delta.swap(prev_delta);
      }
    }
    out.loss *= scale;
    return out;
  }

  /// Mean cross-entropy and top-1 accuracy; ties go to the lowest class index.
  Evaluation evaluate(const ParameterVector& w, const Dataset& data) const {
    check(w);
    detail::require(!data.empty(), "evaluate: empty dataset");
    std::vector<std::vector<double>> act;
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
      forward(w, data.row(r), act);
      const std::vector<double>& z = act.back();
      total += cross_entropy(z, data.labels[r]);
      const auto best = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
      if (best == data.labels[r]) ++correct;
    }
    const double n = static_cast<double>(data.size());
    return {total / n, static_cast<double>(correct) / n};
  }

 private:
  void check(const ParameterVector& w) const {
    if (w.size() != n_params()) {
      throw ValidationError("parameter vector has " + std::to_string(w.size()) +
                            " entries, architecture needs " + std::to_string(n_params()));
    }
  }

  static double cross_entropy(const std::vector<double>& z, int y) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - zmax);
    return zmax + std::log(s) - z[static_cast<std::size_t>(y)];
  }

  void forward(const ParameterVector& w, std::span<const double> x,
               std::vector<std::vector<double>>& act) const {
    const std::size_t n_layers = widths_.size() - 1;
    act.resize(n_layers + 1);
    act[0].assign(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const std::size_t fan_in = widths_[l];
      const std::size_t fan_out = widths_[l + 1];
      const double* bias = &w[off + fan_in * fan_out];
      std::vector<double>& out = act[l + 1];
      out.resize(fan_out);
      const std::vector<double>& in = act[l];
      for (std::size_t o = 0; o < fan_out; ++o) {
        const double* wr = &w[off + o * fan_in];
        double s = bias[o];
        for (std::size_t i = 0; i < fan_in; ++i) s += wr[i] * in[i];
        out[o] = (l + 1 < n_layers) ? std::max(s, 0.0) : s;
      }
      off += fan_in * fan_out + fan_out;
    }
  }

  MlpArchitecture arch_;
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
};

/// Gaussian blobs: class means are drawn once (norm about class_separation),
/// then isotropic noise with standard deviation noise_sigma per sample. The
/// pooled samples are shuffled and split into train and validation.
inline TrainValidation generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  detail::require(spec.n_classes >= 2, "dataset.n_classes: must be >= 2");
  detail::require(spec.input_dim > 0, "dataset.input_dim: must be positive");
  detail::require(spec.samples_per_class > 0, "dataset.samples_per_class: must be positive");
  detail::require(spec.noise_sigma > 0.0, "dataset.noise_sigma: must be positive");
  detail::require(spec.class_separation >= 0.0, "dataset.class_separation: must be >= 0");
  detail::require(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0,
                  "dataset.validation_fraction: must be in (0, 1)");

  RngStream rng = make_stream(seed, {stream::dataset});
  const std::size_t d = spec.input_dim;
  const double mean_scale = spec.class_separation / std::sqrt(static_cast<double>(d));
  std::vector<double> means(spec.n_classes * d);
  for (double& m : means) m = mean_scale * rng.normal();

  Dataset all{d, spec.n_classes, {}, {}};
  std::vector<double> x(d);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      for (std::size_t j = 0; j < d; ++j) x[j] = means[c * d + j] + spec.noise_sigma * rng.normal();
      all.push_back(x, static_cast<int>(c));
    }
  }

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  auto n_val = static_cast<std::size_t>(std::llround(spec.validation_fraction * static_cast<double>(all.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, all.size() - 1);
  const std::size_t n_train = all.size() - n_val;
  return {all.subset(std::span<const std::size_t>(order).first(n_train)),
          all.subset(std::span<const std::size_t>(order).subspan(n_train))};
}

/// Shuffled split of an externally loaded dataset.
inline TrainValidation split_train_validation(const Dataset& data, double validation_fraction,
                                              std::uint64_t seed) {
  detail::require(validation_fraction > 0.0 && validation_fraction < 1.0,
                  "dataset.validation_fraction: must be in (0, 1)");
  detail::require(data.size() >= 2, "dataset: need at least two samples to split");
  RngStream rng = make_stream(seed, {stream::split});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(data.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
  const std::size_t n_train = data.size() - n_val;
  return {data.subset(std::span<const std::size_t>(order).first(n_train)),
          data.subset(std::span<const std::size_t>(order).subspan(n_train))};
}

/// Random equal-size IID shards. The first (n mod K) shards get one extra
/// sample. Device ids are 1..K.
inline std::vector<DatasetPartition> partition_iid(const Dataset& data, std::size_t n_devices,
                                                   std::uint64_t seed) {
  detail::require(n_devices >= 1, "partition_iid: need at least one device");
  detail::require(data.size() >= n_devices,
                  "partition_iid: dataset has " + std::to_string(data.size()) +
                      " samples, fewer than " + std::to_string(n_devices) + " devices");
  RngStream rng = make_stream(seed, {stream::partition});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  const std::size_t base = data.size() / n_devices;
  const std::size_t extra = data.size() % n_devices;
  std::vector<DatasetPartition> shards;
  shards.reserve(n_devices);
  std::size_t start = 0;
  for (std::size_t k = 0; k < n_devices; ++k) {
    const std::size_t len = base + (k < extra ? 1 : 0);
    shards.push_back({k + 1, data.subset(std::span<const std::size_t>(order).subspan(start, len))});
    start += len;
  }
  return shards;
}

/// Mini-batch SGD with momentum (velocity starts at zero) for
/// config.local_epochs passes over the partition. Returns the new parameters;
/// the input is left untouched.
inline ParameterVector local_optimize(const Mlp& model, const ParameterVector& w,
                                      const DatasetPartition& partition,
                                      const OptimizerConfig& config, RngStream& rng) {
  config.validate();
  const Dataset& data = partition.data;
  detail::require(!data.empty(), "local_optimize: device " + std::to_string(partition.owner) +
                                     " has an empty partition");
  ParameterVector out = w;
  ParameterVector velocity(w.size());
  const std::size_t batch = std::min(config.batch_size, data.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      LossGradient lg =
          model.loss_and_gradient(out, data, std::span<const std::size_t>(order).subspan(start, len));
      if (!std::isfinite(lg.loss) || !lg.gradient.all_finite()) {
        throw DivergenceError("local optimizer diverged on device " +
                              std::to_string(partition.owner) + " (loss " +
                              csv::format_double(lg.loss) + ")");
      }
      for (std::size_t i = 0; i < velocity.size(); ++i) {
        velocity[i] = config.momentum * velocity[i] + lg.gradient[i];
        out[i] -= config.learning_rate * velocity[i];
      }
    }
  }
  if (!out.all_finite()) {
    throw DivergenceError("local optimizer produced non-finite parameters on device " +
                          std::to_string(partition.owner));
  }
  return out;
}

/// Loads a CSV with a header row: one integer label column, every other
/// column a feature.
inline Dataset load_csv_dataset(const std::string& path, std::size_t n_classes,
                                const std::string& label_column = "label") {
  const auto rows = csv::read_file(path);
  detail::require(!rows.empty(), path + ": missing header row");
  const auto& header = rows.front();
  const auto it = std::find(header.begin(), header.end(), label_column);
  detail::require(it != header.end(), path + ": no column named '" + label_column + "'");
  const auto label_idx = static_cast<std::size_t>(it - header.begin());
  detail::require(header.size() >= 2, path + ": need at least one feature column");

  Dataset data{header.size() - 1, n_classes, {}, {}};
  std::vector<double> x(data.input_dim);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    const std::string ctx = path + ":" + std::to_string(r + 1);
    detail::require(row.size() == header.size(), ctx + ": expected " +
                                                     std::to_string(header.size()) + " fields");
    std::size_t j = 0;
    int label = 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == label_idx) {
        label = static_cast<int>(csv::parse_integer(row[c], ctx));
      } else {
        x[j++] = csv::parse_double(row[c], ctx);
      }
    }
    detail::require(label >= 0 && static_cast<std::size_t>(label) < n_classes,
                    ctx + ": label out of range [0, n_classes)");
    data.push_back(x, label);
  }
  detail::require(!data.empty(), path + ": no samples");
  return data;
}

}  // namespace flcarbon
