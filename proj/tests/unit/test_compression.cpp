#include <gtest/gtest.h>

#include <cmath>

#include "flcarbon/compression.hpp"

using namespace flcarbon;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  RngStream r(seed);
  std::vector<double> v(n);
  for (double& x : v) x = r.normal();
  return v;
}

}  // namespace

TEST(Bits, ModelAndPayloadBits) {
  EXPECT_EQ(model_bits(59500, 32), 1904000u);
  EXPECT_EQ(payload_bits({0.1, 8, 32, false}, 59500), 47600u);
  EXPECT_EQ(payload_bits({1.0, 32, 32, false}, 59500), 1904000u);
  EXPECT_EQ(payload_bits({0.5, 24, 32, true}, 100), 1200u);
}

TEST(Policy, KeptCount) {
  EXPECT_EQ((CompressionPolicy{0.1, 8, 32, false}.kept(59500)), 5950u);
  EXPECT_EQ((CompressionPolicy{0.001, 8, 32, false}.kept(10)), 1u);
  EXPECT_EQ((CompressionPolicy{0.25, 8, 32, false}.kept(10)), 3u);  // round(2.5) = 3
  EXPECT_EQ((CompressionPolicy{1.0, 8, 32, false}.kept(7)), 7u);
}

TEST(Policy, Validation) {
  EXPECT_THROW((CompressionPolicy{0.0, 8, 32, false}.validate()), ValidationError);
  EXPECT_THROW((CompressionPolicy{1.5, 8, 32, false}.validate()), ValidationError);
  EXPECT_THROW((CompressionPolicy{0.5, 33, 32, false}.validate()), ValidationError);
  EXPECT_THROW((CompressionPolicy{0.5, 0, 32, false}.validate()), ValidationError);
  EXPECT_THROW((CompressionPolicy{0.5, 53, 64, false}.validate()), ValidationError);
  EXPECT_NO_THROW((CompressionPolicy{0.5, 52, 64, false}.validate()));
}

TEST(TopT, KeepsLargestMagnitudesSorted) {
  const std::vector<double> w{0.1, -5.0, 3.0, 0.0, -3.0, 4.0};
  const auto s = sparsify_top_t(w, 3);
  EXPECT_EQ(s.indices, (std::vector<std::uint32_t>{1, 2, 5}));  // tie |3| = |-3|: lower index wins
  EXPECT_EQ(s.values, (std::vector<double>{-5.0, 3.0, 4.0}));
  EXPECT_EQ(s.n_params, 6u);
}

TEST(TopT, TiesGoToLowestIndex) {
  const std::vector<double> w{1.0, -1.0, 1.0, -1.0};
  EXPECT_EQ(sparsify_top_t(w, 2).indices, (std::vector<std::uint32_t>{0, 1}));
}

TEST(TopT, FullKeepIsIdentity) {
  const auto w = random_vector(50, 1);
  EXPECT_EQ(sparsify_top_t(w, 50).to_dense().values(), w);
}

TEST(Quantizer, ZeroVectorGivesZeroUpdate) {
  RngStream r(1);
  const std::vector<double> z(10, 0.0);
  const auto u = compress(z, {0.5, 4, 32, false}, r);
  EXPECT_EQ(u.l2_norm, 0.0);
  EXPECT_EQ(decompress(u), ParameterVector(10));
}

TEST(Quantizer, LevelsBracketTheInput) {
  // Each reconstructed entry is one of the two grid points around |v|/norm.
  const auto w = random_vector(64, 3);
  RngStream r(5);
  const int nb = 3;
  const auto s = sparsify_top_t(w, 64);
  const auto u = quantize_probabilistic(s, nb, r);
  const double nl = 7.0;
  for (std::size_t i = 0; i < 64; ++i) {
    const double scaled = std::abs(w[i]) / s.norm2() * nl;
    EXPECT_TRUE(u.levels[i] == static_cast<std::uint64_t>(std::floor(scaled)) ||
                u.levels[i] == static_cast<std::uint64_t>(std::floor(scaled)) + 1);
    EXPECT_EQ(u.signs[i], w[i] < 0 ? -1 : 1);
  }
}

TEST(Quantizer, OneHotVectorIsExact) {
  // |v| / norm = 1 sits on the top level and is reproduced without noise.
  std::vector<double> w(8, 0.0);
  w[3] = -2.5;
  RngStream r(1);
  const auto d = decompress(compress(w, {1.0, 1, 32, false}, r));
  EXPECT_EQ(d[3], -2.5);
}

TEST(Quantizer, MonteCarloMeanIsUnbiased) {
  const auto w = random_vector(16, 11);
  const CompressionPolicy p{0.5, 2, 32, false};
  const auto target = sparsify_top_t(w, p.kept(w.size())).to_dense();
  RngStream r(12);
  const int draws = 40000;
  ParameterVector mean(16);
  for (int i = 0; i < draws; ++i) mean.axpy(1.0 / draws, decompress(compress(w, p, r)));
  // Per coordinate variance is at most (norm / N_l)^2 / 4.
  const double norm = sparsify_top_t(w, p.kept(w.size())).norm2();
  const double se = norm / 3.0 / 2.0 / std::sqrt(static_cast<double>(draws));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(mean[i], target[i], 6.0 * se) << i;
}

TEST(Quantizer, HighResolutionIsNearlyLossless) {
  const auto w = random_vector(100, 2);
  RngStream r(3);
  const auto d = decompress(compress(w, {1.0, 32, 32, false}, r));
  double n = 0.0;
  for (double x : w) n += x * x;
  for (std::size_t i = 0; i < 100; ++i) EXPECT_NEAR(d[i], w[i], std::sqrt(n) / 4294967295.0 * 1.01);
}

TEST(Payload, IdentityPolicyIsExactButCharged) {
  const ParameterVector w(random_vector(20, 4));
  RngStream r(1);
  const Payload p = encode_update(w, {0.5, 8, 32, true}, r);
  EXPECT_TRUE(p.is_exact());
  EXPECT_EQ(p.decode(), w);
  EXPECT_EQ(p.bits(), 80u);
}

TEST(Payload, CompressedCarriesPolicyBits) {
  const ParameterVector w(random_vector(20, 4));
  RngStream r(1);
  const Payload p = encode_update(w, {0.5, 8, 32, false}, r);
  ASSERT_NE(p.compressed_update(), nullptr);
  EXPECT_EQ(p.bits(), p.compressed_update()->payload_bits());
  EXPECT_EQ(p.n_params(), 20u);
}

TEST(Serialize, RoundTripProperty) {
  RngStream pick(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + pick.below(300);
    const int nb = 1 + static_cast<int>(pick.below(kMaxQuantizerBits));
    const double delta = 0.01 + 0.99 * pick.uniform();
    const auto w = random_vector(n, 1000 + trial);
    RngStream r(trial);
    const auto u = compress(w, {delta, nb, 64, false}, r);
    const auto bytes = serialize(u);
    EXPECT_EQ(deserialize(bytes), u) << "trial " << trial;
  }
}

TEST(Serialize, RejectsMalformed) {
  const std::vector<double> w{1.0, -2.0, 3.0, 0.5};
  RngStream r(1);
  const auto u = compress(w, {0.5, 8, 32, false}, r);
  auto bytes = serialize(u);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(deserialize(truncated), MalformedPayload);

  auto bad_index = bytes;
  bad_index[17] = 200;  // first index far beyond n_params = 4
  EXPECT_THROW(deserialize(bad_index), MalformedPayload);

  auto bad_bits = bytes;
  bad_bits[8] = 0;
  EXPECT_THROW(deserialize(bad_bits), MalformedPayload);

  CompressedUpdate unsorted = u;
  std::swap(unsorted.indices[0], unsorted.indices[1]);
  EXPECT_THROW(unsorted.validate(), MalformedPayload);
  CompressedUpdate level = u;
  level.levels[0] = 256;
  EXPECT_THROW(decompress(level), MalformedPayload);
}
