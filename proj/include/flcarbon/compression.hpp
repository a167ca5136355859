#pragma once

// Update compression: top-t sparsification followed by randomized-rounding
// quantization onto 2^N_b - 1 magnitude levels scaled by the L2 norm of the
// sparsified vector, plus the bits-on-wire accounting used by the energy
// model.
//
// Bits on wire are charged as t * N_b. The positions of the kept entries are
// not charged; a real codec would pay roughly t * log2(N_P) more.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "flcarbon/errors.hpp"
#include "flcarbon/model.hpp"
#include "flcarbon/rng.hpp"

namespace flcarbon {

/// Largest N_b the quantizer accepts: level/N_levels must stay exact in a double.
inline constexpr int kMaxQuantizerBits = 52;

struct CompressionPolicy {
  double delta = 1.0;      ///< fraction of parameters kept, in (0, 1]
  int n_bits = 32;         ///< N_b, bits per kept entry
  int n_bits_clear = 32;   ///< N_bc, bits per uncompressed parameter
  bool identity = false;   ///< bypass Q entirely; bits are still charged as t * N_b

  void validate() const {
    detail::require(std::isfinite(delta) && delta > 0.0 && delta <= 1.0,
                    "compression.delta: must be in (0, 1]");
    detail::require(n_bits_clear >= 1 && n_bits_clear <= 64,
                    "compression.n_bits_clear: must be in [1, 64]");
    detail::require(n_bits >= 1 && n_bits <= n_bits_clear,
                    "compression.n_bits: must be in [1, n_bits_clear]");
    detail::require(n_bits <= kMaxQuantizerBits,
                    "compression.n_bits: must be <= " + std::to_string(kMaxQuantizerBits));
  }

  /// t = max(1, round(delta * N_P)), never above N_P.
  std::size_t kept(std::size_t n_params) const {
    const auto t = static_cast<std::size_t>(std::llround(delta * static_cast<double>(n_params)));
    return std::min(std::max<std::size_t>(1, t), n_params);
  }

  static CompressionPolicy uncompressed(int n_bits_clear = 32) {
    return {1.0, n_bits_clear, n_bits_clear, false};
  }

  static CompressionPolicy exact(int n_bits_clear = 32) {
    return {1.0, n_bits_clear, n_bits_clear, true};
  }

  bool operator==(const CompressionPolicy&) const = default;
};

/// Size of the uncompressed model, b_W = N_P * N_bc.
inline std::uint64_t model_bits(std::size_t n_params, int n_bits_clear = 32) {
  return static_cast<std::uint64_t>(n_params) * static_cast<std::uint64_t>(n_bits_clear);
}

/// Bits sent for one update under a policy: t * N_b.
inline std::uint64_t payload_bits(const CompressionPolicy& policy, std::size_t n_params) {
  policy.validate();
  return static_cast<std::uint64_t>(policy.kept(n_params)) *
         static_cast<std::uint64_t>(policy.n_bits);
}

/// Sparse vector produced by top-t selection. Indices are strictly increasing.
struct SparseVector {
  std::size_t n_params = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  ParameterVector to_dense() const {
    ParameterVector out(n_params);
    for (std::size_t i = 0; i < indices.size(); ++i) out[indices[i]] = values[i];
    return out;
  }

  /// Scaled so that large finite entries do not overflow the sum of squares.
  double norm2() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    if (m == 0.0 || !std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : values) s += (v / m) * (v / m);
    return m * std::sqrt(s);
  }
};

struct CompressedUpdate {
  std::uint32_t n_params = 0;
  int n_bits = 1;
  double l2_norm = 0.0;
  std::vector<std::uint32_t> indices;
  std::vector<std::uint64_t> levels;
  std::vector<std::int8_t> signs;

  std::size_t kept() const noexcept { return indices.size(); }
  std::uint64_t n_levels() const { return (std::uint64_t{1} << n_bits) - 1; }
  std::uint64_t payload_bits() const {
    return static_cast<std::uint64_t>(kept()) * static_cast<std::uint64_t>(n_bits);
  }

  void validate() const {
    if (n_bits < 1 || n_bits > kMaxQuantizerBits) {
      throw MalformedPayload("compressed update: n_bits " + std::to_string(n_bits) + " out of range");
    }
    if (levels.size() != indices.size() || signs.size() != indices.size()) {
      throw MalformedPayload("compressed update: index/level/sign counts differ");
    }
    if (!std::isfinite(l2_norm) || l2_norm < 0.0) {
      throw MalformedPayload("compressed update: invalid l2 norm");
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= n_params) {
        throw MalformedPayload("compressed update: index " + std::to_string(indices[i]) +
                               " >= n_params " + std::to_string(n_params));
      }
      if (i > 0 && indices[i] <= indices[i - 1]) {
        throw MalformedPayload("compressed update: indices not strictly increasing");
      }
      if (levels[i] > n_levels()) throw MalformedPayload("compressed update: level out of range");
      if (signs[i] != 1 && signs[i] != -1) throw MalformedPayload("compressed update: bad sign");
    }
  }

  bool operator==(const CompressedUpdate&) const = default;
};

/// Keeps the t entries of largest magnitude; ties go to the lowest index.
inline SparseVector sparsify_top_t(std::span<const double> w, std::size_t t) {
  detail::require(t >= 1 && t <= w.size(), "sparsify_top_t: t=" + std::to_string(t) +
                                               " outside [1, " + std::to_string(w.size()) + "]");
  std::vector<std::uint32_t> order(w.size());
  std::iota(order.begin(), order.end(), std::uint32_t{0});
  const auto before = [&](std::uint32_t a, std::uint32_t b) {
    const double ma = std::abs(w[a]);
    const double mb = std::abs(w[b]);
    return ma != mb ? ma > mb : a < b;
  };
  if (t < w.size()) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(t), order.end(), before);
    order.resize(t);
  }
  std::sort(order.begin(), order.end());
  SparseVector out{w.size(), std::move(order), {}};
  out.values.reserve(t);
  for (std::uint32_t i : out.indices) out.values.push_back(w[i]);
  return out;
}

/// Randomized rounding of r_n = |w_n| / ||w||_2 onto levels l / N_levels,
/// N_levels = 2^n_bits - 1. With l = floor(r_n N_levels), level l + 1 is
/// drawn with probability r_n N_levels - l, so every coordinate is unbiased.
/// One uniform is consumed per stored entry. A zero vector gives a zero
/// update with l2_norm 0.
inline CompressedUpdate quantize_probabilistic(const SparseVector& w, int n_bits, RngStream& rng) {
  detail::require(n_bits >= 1 && n_bits <= kMaxQuantizerBits,
                  "quantize_probabilistic: n_bits must be in [1, " +
                      std::to_string(kMaxQuantizerBits) + "]");
  detail::require(w.n_params <= std::numeric_limits<std::uint32_t>::max(),
                  "quantize_probabilistic: n_params exceeds 32-bit index range");
  CompressedUpdate out;
  out.n_params = static_cast<std::uint32_t>(w.n_params);
  out.n_bits = n_bits;
  out.indices = w.indices;
  out.levels.assign(w.indices.size(), 0);
  out.signs.assign(w.indices.size(), 1);

  const double norm = w.norm2();
  if (!std::isfinite(norm)) throw DivergenceError("quantize_probabilistic: update norm is not finite");
  if (!(norm > 0.0)) return out;
  out.l2_norm = norm;

  const std::uint64_t n_levels = out.n_levels();
  const double scale = static_cast<double>(n_levels);
  for (std::size_t i = 0; i < w.values.size(); ++i) {
    const double v = w.values[i];
    out.signs[i] = v < 0.0 ? std::int8_t{-1} : std::int8_t{1};
    const double scaled = std::abs(v) / norm * scale;
    const double u = rng.uniform();
    const double floor_level = std::floor(scaled);
    if (floor_level >= scale) {
      out.levels[i] = n_levels;
      continue;
    }
    const auto level = static_cast<std::uint64_t>(floor_level);
    out.levels[i] = (u < scaled - floor_level) ? level + 1 : level;
  }
  return out;
}

/// Dense reconstruction: l2_norm * sign * level / N_levels at stored indices.
inline ParameterVector decompress(const CompressedUpdate& u) {
  u.validate();
  ParameterVector out(u.n_params);
  const double scale = static_cast<double>(u.n_levels());
  for (std::size_t i = 0; i < u.indices.size(); ++i) {
    out[u.indices[i]] = u.l2_norm * static_cast<double>(u.signs[i]) *
                        (static_cast<double>(u.levels[i]) / scale);
  }
  return out;
}

/// Q(w): quantize_probabilistic after sparsify_top_t.
inline CompressedUpdate compress(std::span<const double> w, const CompressionPolicy& policy,
                                 RngStream& rng) {
  policy.validate();
  detail::require(!w.empty(), "compress: empty vector");
  return quantize_probabilistic(sparsify_top_t(w, policy.kept(w.size())), policy.n_bits, rng);
}

/// What one device puts on the wire in a round: either a compressed update
/// or, under the identity policy, the exact dense vector. Both are charged
/// t * N_b bits.
class Payload {
 public:
  static Payload compressed(CompressedUpdate update, std::uint64_t bits) {
    return Payload(std::move(update), bits);
  }
  static Payload exact(ParameterVector values, std::uint64_t bits) {
    return Payload(std::move(values), bits);
  }

  std::uint64_t bits() const noexcept { return bits_; }
  bool is_exact() const noexcept { return std::holds_alternative<ParameterVector>(body_); }

  std::size_t n_params() const {
    if (const auto* v = std::get_if<ParameterVector>(&body_)) return v->size();
    return std::get<CompressedUpdate>(body_).n_params;
  }

  const CompressedUpdate* compressed_update() const { return std::get_if<CompressedUpdate>(&body_); }

  ParameterVector decode() const {
    if (const auto* v = std::get_if<ParameterVector>(&body_)) return *v;
    return decompress(std::get<CompressedUpdate>(body_));
  }

 private:
  Payload(CompressedUpdate u, std::uint64_t bits) : body_(std::move(u)), bits_(bits) {}
  Payload(ParameterVector v, std::uint64_t bits) : body_(std::move(v)), bits_(bits) {}

  std::variant<CompressedUpdate, ParameterVector> body_;
  std::uint64_t bits_ = 0;
};

/// Applies the policy to w: Q(w), or a verbatim copy under the identity flag.
inline Payload encode_update(const ParameterVector& w, const CompressionPolicy& policy, RngStream& rng) {
  policy.validate();
  const std::uint64_t bits = payload_bits(policy, w.size());
  if (policy.identity) return Payload::exact(w, bits);
  return Payload::compressed(compress(w.span(), policy, rng), bits);
}

// Debug wire format, little-endian:
//   u32 n_params | u32 t | u8 n_bits | f64 l2_norm | u32 index[t] |
//   entry[t], each ceil((n_bits + 1) / 8) bytes holding (level << 1) | negative.

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t n_bytes) {
  for (std::size_t b = 0; b < n_bytes; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t& pos, std::size_t n_bytes) {
  if (pos + n_bytes > in.size()) throw MalformedPayload("serialized update truncated");
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < n_bytes; ++b) v |= static_cast<std::uint64_t>(in[pos + b]) << (8 * b);
  pos += n_bytes;
  return v;
}

inline std::size_t entry_bytes(int n_bits) { return static_cast<std::size_t>(n_bits + 1 + 7) / 8; }

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const CompressedUpdate& u) {
  u.validate();
  std::vector<std::uint8_t> out;
  const std::size_t eb = detail::entry_bytes(u.n_bits);
  out.reserve(17 + u.kept() * (4 + eb));
  detail::put_le(out, u.n_params, 4);
  detail::put_le(out, u.kept(), 4);
  detail::put_le(out, static_cast<std::uint64_t>(u.n_bits), 1);
  detail::put_le(out, std::bit_cast<std::uint64_t>(u.l2_norm), 8);
  for (std::uint32_t i : u.indices) detail::put_le(out, i, 4);
  for (std::size_t i = 0; i < u.kept(); ++i) {
    detail::put_le(out, (u.levels[i] << 1) | (u.signs[i] < 0 ? 1u : 0u), eb);
  }
  return out;
}

inline CompressedUpdate deserialize(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  CompressedUpdate u;
  u.n_params = static_cast<std::uint32_t>(detail::get_le(bytes, pos, 4));
  const auto t = static_cast<std::size_t>(detail::get_le(bytes, pos, 4));
  u.n_bits = static_cast<int>(detail::get_le(bytes, pos, 1));
  u.l2_norm = std::bit_cast<double>(detail::get_le(bytes, pos, 8));
  if (u.n_bits < 1 || u.n_bits > kMaxQuantizerBits) throw MalformedPayload("serialized update: bad n_bits");
  const std::size_t eb = detail::entry_bytes(u.n_bits);
  if (bytes.size() != pos + t * (4 + eb)) throw MalformedPayload("serialized update: length mismatch");
  u.indices.resize(t);
  u.levels.resize(t);
  u.signs.resize(t);
  for (std::size_t i = 0; i < t; ++i) u.indices[i] = static_cast<std::uint32_t>(detail::get_le(bytes, pos, 4));
  for (std::size_t i = 0; i < t; ++i) {
    const std::uint64_t e = detail::get_le(bytes, pos, eb);
    u.levels[i] = e >> 1;
    u.signs[i] = (e & 1u) ? std::int8_t{-1} : std::int8_t{1};
  }
  u.validate();
  return u;
}

}  // namespace flcarbon
