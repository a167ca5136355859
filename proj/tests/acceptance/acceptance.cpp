// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Tolerances are pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "flcarbon/flcarbon.hpp"

using namespace flcarbon;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------- 1
Outcome bit_accounting() {
  const std::uint64_t b_w = model_bits(59500, 32);
  const std::uint64_t up = payload_bits({0.1, 8, 32, false}, 59500);
  // A 59500-parameter model at 32 bits is 0.24 MB with 1 MB = 8e6 bits.
  const double mb = static_cast<double>(b_w) / 8e6;
  const bool pass = b_w == 1904000 && up == 47600 && std::round(mb * 100) / 100 == 0.24;
  return {pass, "b_W=" + std::to_string(b_w) + " bits (" + fmt(mb, 4) + " MB), delta=0.1 N_b=8 -> " +
                    std::to_string(up) + " bits"};
}

// ---------------------------------------------------------------- 2
Outcome energy_oracles() {
  constexpr double kRelTol = 1e-9;
  const std::size_t n = 59500;
  const LinkEfficiencies links = LinkEfficiencies::uniform(1e4);
  const CompressionPolicy full = CompressionPolicy::uncompressed();
  // Hand arithmetic; one full-model transfer at 10 kbit/J is 1904000/1e4 J.
  const double x = 190.4;
  const double fa_expected = 3.51 + x + x + 0.14 + 0.12;             // 384.57
  const double ps_expected = 10 * 0.24 + x + 10 * x + 0.70;          // 2097.5
  const double cfa_expected = 3.51 + 9 * 0.06 + 9 * x + x + 0.14 + 0.12;  // 1908.31
  const std::vector<CompressionPolicy> ten(10, full), nine(9, full);
  const double fa = fa_device_energy({}, links, full, n).total();
  const double ps = ps_energy({}, links, ten, n).total();
  const double cfa = cfa_device_energy({}, links, full, nine, n).total();
  const auto close = [&](double a, double b) { return std::abs(a - b) <= kRelTol * std::abs(b); };
  const bool pass = close(fa, fa_expected) && close(ps, ps_expected) && close(cfa, cfa_expected) &&
                    close(fa_expected, 384.57) && close(ps_expected, 2097.5) && close(cfa_expected, 1908.31);
  return {pass, "fa_device=" + fmt(fa, 10) + " J, ps=" + fmt(ps, 10) + " J, cfa_device=" + fmt(cfa, 10) +
                    " J (rel tol 1e-9)"};
}

// ---------------------------------------------------------------- 3
Outcome quantizer_unbiased() {
  constexpr double kTol = 0.01;
  constexpr std::size_t kVectors = 200;
  constexpr std::size_t kParams = 256;
  constexpr int kDraws = 20000;
  // Four kept entries: at larger t the Monte Carlo standard error of a
  // 20000-draw mean at N_b = 1 alone exceeds 1% (see README).
  const double delta = 4.0 / kParams;
  bool pass = true;
  std::string detail;
  for (int nb : {1, 2, 4, 8}) {
    const CompressionPolicy policy{delta, nb, 32, false};
    double sum_sq = 0.0;
    double worst = 0.0;
    for (std::size_t v = 0; v < kVectors; ++v) {
      RngStream gen = make_stream(2024, {static_cast<std::uint64_t>(nb), v});
      std::vector<double> w(kParams);
      for (double& x : w) x = gen.normal();
      const SparseVector s = sparsify_top_t(w, policy.kept(kParams));
      std::vector<double> acc(s.indices.size(), 0.0);
      RngStream rng = make_stream(7, {static_cast<std::uint64_t>(nb), v});
      for (int d = 0; d < kDraws; ++d) {
        const CompressedUpdate u = quantize_probabilistic(s, nb, rng);
        const double scale = u.l2_norm / static_cast<double>(u.n_levels());
        for (std::size_t i = 0; i < acc.size(); ++i) {
          acc[i] += scale * u.signs[i] * static_cast<double>(u.levels[i]);
        }
      }
      double err = 0.0, ref = 0.0;
      for (std::size_t i = 0; i < acc.size(); ++i) {
        const double m = acc[i] / kDraws;
        err += (m - s.values[i]) * (m - s.values[i]);
        ref += s.values[i] * s.values[i];
      }
      sum_sq += err / ref;
      worst = std::max(worst, std::sqrt(err / ref));
    }
    const double rms = std::sqrt(sum_sq / kVectors);
    pass = pass && rms < kTol;
    detail += "N_b=" + std::to_string(nb) + " rms " + fmt(rms, 3) + " (worst " + fmt(worst, 3) + ") ";
  }
  return {pass, detail + "over 200 vectors, t=4 of 256, 20000 draws, tol 1%"};
}

// ---------------------------------------------------------------- 4, 5

struct Fleet {
  Mlp model{MlpArchitecture{16, {16}, 4}};
  std::vector<CfaDeviceState> states;
};

Fleet make_fleet(std::size_t k, double gamma) {
  Fleet f;
  SyntheticSpec spec{4, 16, 10 * k, 3.0, 1.0, 0.2};
  const auto tv = generate_synthetic_dataset(spec, 5);
  auto parts = partition_iid(tv.train, k, 5);
  for (std::size_t i = 0; i < k; ++i) {
    f.states.push_back(CfaDeviceState::initial(i + 1, f.model.initialize(100 + i), parts[i], gamma));
  }
  return f;
}

void cfa_round(Fleet& f, const MixingMatrix& omega, const CompressionPolicy& policy, std::uint64_t round) {
  const OptimizerConfig frozen{0.0, 0.9, 64, 1};
  std::vector<DeviceStep> steps;
  for (std::size_t k = 0; k < f.states.size(); ++k) {
    RngStream rng = make_stream(11, {stream::local_round, round, k + 1});
    steps.push_back(cfa_local_step(f.model, f.states[k], policy, frozen, rng));
  }
  cfa_apply_round(f.states, steps, omega);
}

Outcome choco_mean_preserved() {
  constexpr double kTol = 1e-9;
  const auto omega = build_mixing_matrix(Topology::ring(10));
  double worst = 0.0;
  for (double delta : {0.1, 0.5, 1.0}) {
    for (int nb : {8, 16, 32}) {
      Fleet f = make_fleet(10, 0.1);
      ParameterVector sum0(f.model.n_params());
      for (const auto& s : f.states) sum0 += s.W;
      for (std::uint64_t round = 1; round <= 200; ++round) {
        cfa_round(f, omega, {delta, nb, 32, false}, round);
        ParameterVector sum(sum0.size());
        for (const auto& s : f.states) sum += s.W;
        for (std::size_t i = 0; i < sum.size(); ++i) worst = std::max(worst, std::abs(sum[i] - sum0[i]));
      }
    }
  }
  return {worst < kTol, "max |sum_k W_k,i - sum_k W_k,0|_inf = " + fmt(worst, 3) +
                            " over 3x3 (delta, N_b) grid, 200 rounds, tol 1e-9"};
}

double spread(const std::vector<CfaDeviceState>& s) {
  ParameterVector mean(s[0].W.size());
  for (const auto& d : s) mean.axpy(1.0 / static_cast<double>(s.size()), d.W);
  double worst = 0.0;
  for (const auto& d : s) worst = std::max(worst, (d.W - mean).norm2());
  return worst;
}

Outcome consensus_contraction() {
  constexpr double kRatio = 1e-6;
  Fleet f = make_fleet(10, 1.0);
  const auto omega = build_mixing_matrix(Topology::ring(10));
  const double s0 = spread(f.states);
  std::size_t reached = 0;
  for (std::uint64_t round = 1; round <= 500; ++round) {
    cfa_round(f, omega, CompressionPolicy::exact(), round);
    if (!reached && spread(f.states) < kRatio * s0) reached = round;
  }
  const double ratio = spread(f.states) / s0;
  return {reached != 0, "spread ratio after 500 rounds " + fmt(ratio, 3) + ", below 1e-6 from round " +
                            std::to_string(reached)};
}

// ---------------------------------------------------------------- 6
Outcome fedavg_oracle() {
  constexpr double kTol = 1e-12;
  const Mlp model({8, {8}, 3});
  SyntheticSpec spec{3, 8, 80, 3.0, 1.0, 0.2};
  const auto tv = generate_synthetic_dataset(spec, 3);
  // Deliberately unequal shard sizes so the size weights matter.
  const std::vector<std::size_t> sizes{10, 20, 35, 50, 77};
  std::vector<DatasetPartition> parts;
  std::size_t start = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    std::vector<std::size_t> rows(sizes[k]);
    std::iota(rows.begin(), rows.end(), start);
    start += sizes[k];
    parts.push_back({k + 1, tv.train.subset(rows)});
  }
  const ParameterVector w0 = model.initialize(4);
  FaServerState server{w0, FaServerState::size_weights(parts)};
  std::vector<FaDeviceState> devices;
  for (std::size_t k = 0; k < parts.size(); ++k) devices.push_back({k + 1, w0, parts[k]});
  double worst = 0.0;
  for (std::uint64_t round = 1; round <= 20; ++round) {
    std::vector<Payload> updates;
    ParameterVector direct(w0.size());
    for (std::size_t k = 0; k < devices.size(); ++k) {
      RngStream rng = make_stream(9, {stream::local_round, round, k + 1});
      DeviceStep step = fa_device_round(model, devices[k], CompressionPolicy::exact(), {0.05, 0.9, 16, 1}, rng);
      direct.axpy(static_cast<double>(sizes[k]) / 192.0, step.half_step);
      updates.push_back(std::move(step.update));
    }
    server.W_global = fa_server_aggregate(server, updates);
    fa_broadcast(server, devices);
    for (std::size_t i = 0; i < direct.size(); ++i) worst = std::max(worst, std::abs(server.W_global[i] - direct[i]));
  }
  return {worst <= kTol, "max |W_PS - sum sigma_k W_k,i+1/2| = " + fmt(worst, 3) + " over 20 rounds, K=5, tol 1e-12"};
}

// ---------------------------------------------------------------- 7
Outcome ledger_closed_form() {
  constexpr double kRelTol = 1e-12;
  double worst = 0.0;
  bool monotone = true;
  for (std::uint64_t trace = 0; trace < 20; ++trace) {
    RngStream rng = make_stream(77, {trace});
    const double duration = 60.0;
    std::vector<IntensityStep> steps;
    std::vector<double> energies;
    for (std::size_t r = 1; r <= 1000; ++r) {
      steps.push_back({static_cast<double>(r) * duration, rng.uniform(0.01, 1.0)});
      energies.push_back(rng.uniform(0.0, 5000.0));
    }
    const CarbonIntensitySchedule schedule(1, steps, duration);
    CarbonLedger ledger{1, 0.0, {}};
    long double oracle = 0.0L;
    double prev = 0.0;
    for (std::size_t r = 1; r <= 1000; ++r) {
      ledger_update(ledger, r, energies[r - 1], schedule);
      oracle += static_cast<long double>(energies[r - 1]) * steps[r - 1].intensity / 3.6e6L;
      monotone = monotone && ledger.cumulative_kg >= prev;
      prev = ledger.cumulative_kg;
    }
    worst = std::max(worst, static_cast<double>(std::abs(ledger.cumulative_kg - oracle) / oracle));
  }
  return {worst <= kRelTol && monotone,
          "20 traces x 1000 rounds, max rel diff " + fmt(worst, 3) + (monotone ? ", nondecreasing" : ", NOT monotone")};
}

// ---------------------------------------------------------------- 8, 9

// Synthetic task shared by the trend criteria: Gaussian blobs, 80 training
// samples per device, fully connected CFA with gamma = 0.01.
RunConfig trend_task(Protocol p, const CompressionPolicy& q) {
  RunConfig c;
  c.protocol = p;
  c.num_devices = 10;
  c.topology.kind = "full";
  c.compression = q;
  c.architecture = {32, {128}, 10};
  c.dataset.samples_per_class = 100;
  c.dataset.class_separation = 3.0;
  c.dataset.noise_sigma = 1.0;
  c.optimizer = {0.03, 0.9, 64, 2};
  c.gamma = 0.01;
  return c;
}

double fa_round_carbon(const RunConfig& c, double ee) {
  const std::size_t n = c.architecture.n_params();
  const auto links = LinkEfficiencies::uniform(ee);
  const std::vector<CompressionPolicy> all(c.num_devices, c.compression);
  const double devices = static_cast<double>(c.num_devices) *
                         fa_device_energy(c.device_energy, links, c.compression, n).total();
  const double ps = ps_energy(c.ps_energy, links, all, n, c.compression.n_bits_clear).total();
  return (devices * c.carbon.device_intensity + ps * c.carbon.ps_intensity) / kJoulePerKwh;
}

Outcome fa_cfa_crossover() {
  const CompressionPolicy fa_q{0.1, 16, 32, false};
  const CompressionPolicy cfa_q{0.1, 8, 32, false};
  const RunConfig fa_base = trend_task(Protocol::fa, fa_q);
  // Half a round below 30 rounds of FA at 50 kbit/J, so FA stops after round 30.
  const double budget = 29.5 * fa_round_carbon(fa_base, 5e4);
  std::string detail = "budget " + fmt(budget, 4) + " kg;";
  bool pass = true;
  for (double ee : {5e3, 1e5}) {
    double acc[2] = {0.0, 0.0};
    std::size_t rounds[2] = {0, 0};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      for (int p = 0; p < 2; ++p) {
        RunConfig c = trend_task(p == 0 ? Protocol::fa : Protocol::cfa, p == 0 ? fa_q : cfa_q);
        c.seed = seed;
        c.links = LinkEfficiencies::uniform(ee);
        c.stopping = {std::nullopt, budget, std::nullopt};
        const RunSummary s = run(c).summary;
        acc[p] += s.final_accuracy / 5.0;
        rounds[p] += s.rounds_executed;
      }
    }
    const bool ok = ee < 2.5e4 ? acc[1] >= acc[0] : acc[0] >= acc[1];
    pass = pass && ok;
    detail += " EE=" + fmt(ee / 1e3, 3) + "k: FA " + fmt(acc[0], 4) + " (" + std::to_string(rounds[0] / 5) +
              " rds), CFA " + fmt(acc[1], 4) + " (" + std::to_string(rounds[1] / 5) + " rds);";
  }
  return {pass, detail + " 5-seed means"};
}

// Carbon spent until the target accuracy is first reached; NaN if never.
double carbon_to_target(RunConfig c, double target, std::size_t max_rounds) {
  c.stopping = {max_rounds, std::nullopt, target};
  const RunSummary s = run(c).summary;
  return s.target_reached ? s.c_tot_kg : std::nan("");
}

Outcome compression_savings() {
  const double target = 0.7;
  const std::size_t cap = 200;
  bool pass = true;
  std::string detail;
  const struct {
    Protocol p;
    CompressionPolicy compressed;
  } cases[] = {{Protocol::fa, {0.1, 16, 32, false}}, {Protocol::cfa, {0.5, 24, 32, false}}};
  for (const auto& cs : cases) {
    int wins = 0;
    double sum_c = 0.0, sum_u = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      RunConfig compressed = trend_task(cs.p, cs.compressed);
      RunConfig plain = trend_task(cs.p, CompressionPolicy::uncompressed());
      compressed.seed = plain.seed = seed;
      compressed.links = plain.links = LinkEfficiencies::uniform(1e4);
      const double cc = carbon_to_target(compressed, target, cap);
      const double cu = carbon_to_target(plain, target, cap);
      if (!std::isnan(cc) && (std::isnan(cu) || cc < cu)) ++wins;
      sum_c += cc;
      sum_u += cu;
    }
    pass = pass && wins == 5;
    detail += to_string(cs.p) + ": compressed " + fmt(sum_c / 5, 4) + " kg vs full " + fmt(sum_u / 5, 4) +
              " kg, lower in " + std::to_string(wins) + "/5 seeds; ";
  }
  return {pass, detail + "target accuracy " + fmt(target, 3) + ", EE 10 kbit/J"};
}

// ---------------------------------------------------------------- 10
Outcome gradient_check() {
  constexpr double kTol = 1e-5;
  constexpr double kStep = 1e-5;
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    RngStream rng = make_stream(31, {inst});
    MlpArchitecture arch{2 + rng.below(5), {}, 2 + rng.below(4)};
    const std::size_t layers = rng.below(3);
    for (std::size_t l = 0; l < layers; ++l) arch.hidden_dims.push_back(2 + rng.below(5));
    const Mlp model(arch);
    ParameterVector w = model.initialize(inst);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += 0.1 * rng.normal();
    Dataset data{arch.input_dim, arch.n_classes, {}, {}};
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> x(arch.input_dim);
    for (std::size_t r = 0; r < n; ++r) {
      for (double& v : x) v = rng.normal();
      data.push_back(x, static_cast<int>(rng.below(arch.n_classes)));
    }
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const LossGradient lg = model.loss_and_gradient(w, data, rows);
    double diff = 0.0, norm_a = 0.0, norm_fd = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      ParameterVector wp = w, wm = w;
      wp[i] += kStep;
      wm[i] -= kStep;
      const double fd = (model.loss(wp, data, rows) - model.loss(wm, data, rows)) / (2 * kStep);
      diff += (fd - lg.gradient[i]) * (fd - lg.gradient[i]);
      norm_a += lg.gradient[i] * lg.gradient[i];
      norm_fd += fd * fd;
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(norm_a), std::sqrt(norm_fd)));
  }
  return {worst < kTol, "max relative L2 error " + fmt(worst, 3) + " over 20 instances, h=1e-5, tol 1e-5"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 bit accounting", bit_accounting},
      {"2 energy formula oracles", energy_oracles},
      {"3 quantizer unbiasedness", quantizer_unbiased},
      {"4 CHOCO mean preservation", choco_mean_preserved},
      {"5 consensus contraction", consensus_contraction},
      {"6 FedAvg oracle", fedavg_oracle},
      {"7 carbon ledger closed form", ledger_closed_form},
      {"8 FA/CFA crossover direction", fa_cfa_crossover},
      {"9 compression carbon savings", compression_savings},
      {"10 gradient check", gradient_check},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %-32s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
