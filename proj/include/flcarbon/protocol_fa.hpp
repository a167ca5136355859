#pragma once

// Parameter-server federated averaging. Devices run the local optimizer,
// compress their model update and upload it; the server adds the weighted
// sum of decoded updates to the global model and publishes it uncompressed.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flcarbon/compression.hpp"
#include "flcarbon/errors.hpp"
#include "flcarbon/model.hpp"
#include "flcarbon/rng.hpp"

namespace flcarbon {

struct FaDeviceState {
  std::size_t device_id = 0;
  ParameterVector W;
  DatasetPartition partition;
};

struct FaServerState {
  ParameterVector W_global;
  std::vector<double> weights;  ///< sigma_k per device, summing to 1

  /// sigma_k = n_k / sum_j n_j
  static std::vector<double> size_weights(std::span<const DatasetPartition> partitions) {
    double total = 0.0;
    for (const auto& p : partitions) total += static_cast<double>(p.data.size());
    detail::require(total > 0.0, "size_weights: all partitions are empty");
    std::vector<double> w;
    w.reserve(partitions.size());
    for (const auto& p : partitions) w.push_back(static_cast<double>(p.data.size()) / total);
    return w;
  }

  void validate() const {
    double sum = 0.0;
    for (double s : weights) {
      detail::require(s >= 0.0, "aggregation weights must be non-negative");
      sum += s;
    }
    detail::require(std::abs(sum - 1.0) <= 1e-12,
                    "aggregation weights sum to " + csv::format_double(sum) + ", not 1");
  }
};

/// Output of one device's local work in a round.
struct DeviceStep {
  Payload update;              ///< what goes on the wire
  ParameterVector half_step;   ///< W_{k,i+1/2}
};

/// Local optimization, then P = W_{i+1/2} - W_i compressed. The device state
/// is not advanced; the next model comes from the server broadcast.
inline DeviceStep fa_device_round(const Mlp& model, const FaDeviceState& state,
                                  const CompressionPolicy& policy, const OptimizerConfig& optimizer,
                                  RngStream& rng) {
  if (!state.W.all_finite()) {
    throw DivergenceError("fa_device_round: device " + std::to_string(state.device_id) +
                          " holds a non-finite model");
  }
  ParameterVector half = local_optimize(model, state.W, state.partition, optimizer, rng);
  ParameterVector update = half - state.W;
  return {encode_update(update, policy, rng), std::move(half)};
}

/// W_{t+1} = W_t + sum_k sigma_k decode(P_k). Updates are applied in device
/// order.
inline ParameterVector fa_server_aggregate(const FaServerState& server,
                                           std::span<const Payload> updates) {
  server.validate();
  detail::require(updates.size() == server.weights.size(),
                  "fa_server_aggregate: got " + std::to_string(updates.size()) + " updates for " +
                      std::to_string(server.weights.size()) + " devices");
  ParameterVector next = server.W_global;
  for (std::size_t k = 0; k < updates.size(); ++k) {
    detail::require(updates[k].n_params() == next.size(),
                    "fa_server_aggregate: update from device " + std::to_string(k + 1) + " has " +
                        std::to_string(updates[k].n_params()) + " parameters, expected " +
                        std::to_string(next.size()));
    next.axpy(server.weights[k], updates[k].decode());
  }
  return next;
}

struct BroadcastReceipt {
  std::size_t recipients = 0;
  std::uint64_t bits_per_device = 0;  ///< b_W, the model travels uncompressed
};

/// Copies the global model to every device.
inline BroadcastReceipt fa_broadcast(const FaServerState& server, std::span<FaDeviceState> devices,
                                     int n_bits_clear = 32) {
  for (auto& d : devices) d.W = server.W_global;
  return {devices.size(), model_bits(server.W_global.size(), n_bits_clear)};
}

}  // namespace flcarbon
