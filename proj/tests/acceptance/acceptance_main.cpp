// Acceptance suite: exercises every gate the artifact must clear, one
// criterion per section, printing PASS/FAIL per criterion. Criterion 5 runs
// the desk-scale preset studies and dominates the runtime; results are cached
// under the output directory, so reruns are cheap.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tdmr/channel.hpp"
#include "tdmr/detector.hpp"
#include "tdmr/equalizer.hpp"
#include "tdmr/experiment.hpp"
#include "tdmr/sector_io.hpp"
#include "tdmr/tape.hpp"
#include "tdmr/training.hpp"

using namespace tdmr;

namespace {

struct Options {
  std::filesystem::path out = "acceptance-out";
  std::set<int> only;  // empty = all
  int sectors = 20;
  bool full = false;
};

std::vector<double> random_block(std::size_t n, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, scale);
  std::vector<double> y(n);
  for (double& v : y) v = gauss(rng);
  return y;
}

// ---------------------------------------------------------------------------
// criterion 1: detector oracle equivalence
bool criterion1(const Options&, std::ostream& log) {
  const PrTarget fixed471{{4.0, 7.0, 1.0}, false};
  PrTarget random5{{1.0, 0.0, 0.0, 0.0, 0.0}, true};
  {
    std::mt19937_64 rng(20240817);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (std::size_t m = 1; m < 5; ++m) random5.taps[m] = uni(rng);
  }
  const Trellis t3 = build_trellis(fixed471);
  const Trellis t5 = build_trellis(random5);

  std::size_t hard_mismatch = 0;
  std::size_t llr_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    for (const Trellis* trellis : {&t3, &t5}) {
      const double scale = trellis == &t3 ? 6.0 : 1.5;
      const auto y = random_block(10, 50000 + static_cast<std::uint64_t>(trial), scale);
      const auto brute = brute_force_llr(*trellis, y);
      const auto hard = viterbi_hard(*trellis, y);
      const auto soft = maxlog_llr(*trellis, y);
      if (hard != brute.hard) ++hard_mismatch;
      if (std::memcmp(soft.llr.data(), brute.llr.data(), soft.llr.size() * sizeof(double)) != 0) {
        ++llr_mismatch;
      }
    }
  }
  log << "    2000 blocks (two targets): hard mismatches=" << hard_mismatch
      << ", llr (bitwise) mismatches=" << llr_mismatch << "\n";
  return hard_mismatch == 0 && llr_mismatch == 0;
}

// ---------------------------------------------------------------------------
// criterion 2: full-chain gradient check
bool criterion2(const Options& opts, std::ostream& log) {
  const auto data_dir = opts.out / "gradcheck-data";
  if (!std::filesystem::exists(data_dir / "gen.json")) {
    GenConfig gen;
    gen.sectors = 2;
    gen.bits = 39512;
    gen.seed = 314;
    generate_dataset(data_dir, gen);
  }
  const auto sectors = load_sector_dir(data_dir);

  const MlpSpec spec{{22, 1}, Activation::Tanh};
  const double clip = 50.0;
  const int delay = default_decision_delay(spec.d_in(), 5);

  int passed = 0;
  int skipped_ties = 0;
  int attempts = 0;
  double worst_rel = 0.0;
  const std::size_t batch = 256;
  for (int candidate = 0; candidate < 60 && passed < 20; ++candidate, ++attempts) {
    MlpParams params = init_mlp(spec, 1000 + static_cast<std::uint64_t>(candidate));
    PrTarget target{{1.0, 0.45, 0.08, -0.15, 0.03}, true};
    const Sector& sector = sectors[static_cast<std::size_t>(candidate % 2)];
    const std::size_t first = 128 + static_cast<std::size_t>(candidate / 2) * 1280;

    const auto chain = ce_chain_gradient(params, target, true, sector, first, batch, delay, clip);
    ParamSet ps = make_param_set(params, &target);
    const auto flat = ps.snapshot();
    auto f = [&](std::span<const double> v) {
      ps.restore(v);
      return ce_span_probe(params, target, sector, first, batch, delay, clip).ce;
    };
    auto sig = [&](std::span<const double> v) {
      ps.restore(v);
      return ce_span_probe(params, target, sector, first, batch, delay, clip).argmin_signature;
    };
    const auto fd = finite_diff(f, sig, flat, 1e-5);
    ps.restore(flat);

    const std::size_t mlp_count = params.learnable_count();
    bool tie_free = true;
    double batch_worst = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      if (i == mlp_count) continue;  // frozen monic tap: not a free tap
      if (!fd.valid[i]) {
        tie_free = false;
        break;
      }
      const double denom =
          std::max({std::abs(chain.gradient[i]), std::abs(fd.gradient[i]), 1e-7});
      batch_worst = std::max(batch_worst, std::abs(chain.gradient[i] - fd.gradient[i]) / denom);
    }
    if (!tie_free) {
      ++skipped_ties;
      continue;
    }
    worst_rel = std::max(worst_rel, batch_worst);
    if (batch_worst <= 1e-4) {
      ++passed;
    } else {
      log << "    batch " << candidate << " failed: worst rel err " << batch_worst << "\n";
      return false;
    }
  }
  log << "    " << passed << "/20 tie-free batches passed (skipped " << skipped_ties
      << " with ties, " << attempts << " attempted); worst rel err " << worst_rel << "\n";
  return passed == 20;
}

// ---------------------------------------------------------------------------
// criterion 3: dCE/dLLR closed form
bool criterion3(const Options&, std::ostream& log) {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> uni(-5.0, 5.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double llr = uni(rng);
    for (const std::int8_t bit : {std::int8_t{-1}, std::int8_t{1}}) {
      const double sigma = 1.0 / (1.0 + std::exp(-llr));
      const double analytic = dce_dllr(llr, bit);
      const double closed_form = bit > 0 ? -(1.0 - sigma) : sigma;
      if (std::abs(analytic - closed_form) > 1e-15 * std::abs(closed_form)) return false;
      const std::vector<std::int8_t> bits{bit};
      auto f = [&](std::span<const double> p) {
        return ce_loss(std::vector<double>{p[0]}, bits);
      };
      const auto fd = finite_diff(f, std::vector<double>{llr}, 1e-5);
      worst = std::max(worst, std::abs(analytic - fd.gradient[0]) / std::abs(analytic));
    }
  }
  log << "    worst relative error vs central differences: " << worst << "\n";
  return worst <= 1e-8;
}

// ---------------------------------------------------------------------------
// criterion 4: channel invariants
bool criterion4(const Options&, std::ostream& log) {
  bool ok = true;

  const double sigma = fit_crosstrack_sigma(30.0, 1.0, kReferenceItiWeights);
  ReaderGeometry geometry;
  geometry.crosstrack_sigma = sigma;
  const auto weights = iti_weights(geometry);
  for (int j = 0; j < kNumReaders; ++j) {
    double sum = 0.0;
    for (double v : weights[static_cast<std::size_t>(j)]) sum += v;
    if (std::abs(sum - 1.0) > 1e-6) ok = false;
  }
  double worst_weight_rel = 0.0;
  for (int i = 0; i < kNumTracks; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    worst_weight_rel = std::max(
        worst_weight_rel,
        std::abs(weights[0][idx] - kReferenceItiWeights[idx]) / kReferenceItiWeights[idx]);
  }
  log << "    fitted crosstrack sigma " << sigma << "; worst weight rel err " << worst_weight_rel
      << "\n";
  if (worst_weight_rel > 0.02) ok = false;

  // noiseless synthesis vs direct triple-loop convolution
  ChannelParams clean;
  clean.pw50_over_t = 1.5;
  clean.jitter_sigma = 0.0;
  clean.awgn_sigma = 0.0;
  const auto tracks = gen_tracks(4000, 2024, clean);
  const auto frame = synthesize_readback(tracks, clean, geometry, 1);
  const auto table = sampled_dibit(clean);
  double worst_conv = 0.0;
  for (int j = 0; j < kNumReaders; ++j) {
    const auto rj = static_cast<std::size_t>(j);
    for (std::size_t k = 0; k < frame.size(); ++k) {
      double acc = 0.0;
      for (int i = 0; i < kNumTracks; ++i) {
        const auto ti = static_cast<std::size_t>(i);
        double track_acc = 0.0;
        for (int lag = -clean.span_bits; lag <= clean.span_bits; ++lag) {
          const auto m = static_cast<std::ptrdiff_t>(k) - lag;
          const double bit =
              (m >= 0 && m < static_cast<std::ptrdiff_t>(frame.size()))
                  ? tracks.bits[ti][static_cast<std::size_t>(m)]
                  : -1.0;
          track_acc += bit * table[static_cast<std::size_t>(lag + clean.span_bits)];
        }
        acc += weights[rj][ti] * track_acc;
      }
      worst_conv = std::max(worst_conv, std::abs(acc - frame.samples[rj][k]));
    }
  }
  log << "    noiseless synthesis vs convolution oracle: max abs diff " << worst_conv << "\n";
  if (worst_conv > 1e-12) ok = false;

  // jitter truncation
  ChannelParams jittery;
  jittery.jitter_sigma = 0.08;
  const auto jt = gen_tracks(39512, 4096, jittery);
  for (const auto& track : jt.jitter) {
    for (double dt : track) {
      if (!(std::abs(dt) < 0.5)) ok = false;
    }
  }

  // calibrated raw BER
  ChannelParams params;
  params.pw50_over_t = 1.5;
  params.jitter_sigma = 0.08;
  const ChannelParams calibrated = calibrate_noise(params, geometry, 0.11);
  double ber_acc = 0.0;
  const int fresh = 3;
  for (int s = 0; s < fresh; ++s) {
    const auto t = gen_tracks(39512, 60000 + static_cast<std::uint64_t>(s), calibrated);
    const auto fr =
        synthesize_readback(t, calibrated, geometry, 61000 + static_cast<std::uint64_t>(s));
    const auto ber = raw_ber(fr, t);
    ber_acc += 0.5 * (ber[0] + ber[1]);
  }
  const double mean_ber = ber_acc / fresh;
  log << "    calibrated awgn sigma " << calibrated.awgn_sigma << "; fresh-seed raw BER "
      << mean_ber << "\n";
  if (std::abs(mean_ber - 0.11) > 0.02) ok = false;

  return ok;
}

// ---------------------------------------------------------------------------
// criterion 5: ordering reproduction at desk scale
bool criterion5(const Options& opts, std::ostream& log) {
  PresetOptions preset;
  preset.sectors = opts.sectors;
  preset.full = opts.full;
  preset.seed = 1;
  preset.out = opts.out;
  preset.assert_orderings = true;
  bool ok = true;
  for (const std::string name : {"table1", "fig4", "table3", "table2"}) {
    log << "    preset " << name << ":\n";
    std::ostringstream sub;
    const int rc = run_preset(name, preset, sub);
    std::istringstream lines(sub.str());
    std::string line;
    while (std::getline(lines, line)) log << "      " << line << "\n";
    if (rc != 0) ok = false;
  }
  return ok;
}

// ---------------------------------------------------------------------------
// criterion 6: ML-adaptation direction
bool criterion6(const Options&, std::ostream& log) {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> uni(-6.0, 6.0);
  const double mu = 1e-3;
  int checked = 0;
  for (int k = 0; k < 1024; ++k) {
    const double llr = uni(rng);
    const std::int8_t bit = (k & 1) ? 1 : -1;
    const double next = llr - mu * dce_dllr(llr, bit);
    const double sigma = llr >= 0.0 ? 1.0 / (1.0 + std::exp(-llr))
                                    : std::exp(llr) / (1.0 + std::exp(llr));
    // the applied update is exactly the incorrect-decision mass times mu
    if (bit == -1) {
      if (next != llr - mu * sigma) return false;  // down by exactly mu * P(+1)
      if (!(next < llr)) return false;
    } else {
      if (next != llr + mu * (1.0 - sigma)) return false;  // up by exactly mu * P(-1)
      if (!(next > llr)) return false;
    }
    ++checked;
  }
  log << "    " << checked << " LLR updates moved by exactly the incorrect-decision mass\n";
  return true;
}

// ---------------------------------------------------------------------------
// criterion 7: monic and freeze contracts
bool criterion7(const Options&, std::ostream& log) {
  MlpParams mlp = init_mlp({{22, 6, 1}, Activation::Tanh}, 99);
  PrTarget target{{1.0, 0.25, 0.1, -0.05, 0.02}, true};
  ParamSet ps = make_param_set(mlp, &target);
  AdamState state;
  TrainConfig config;
  std::mt19937_64 rng(31337);
  std::normal_distribution<double> gauss(0.0, 0.7);
  std::vector<double> grads(ps.size());
  for (int step = 0; step < 10000; ++step) {
    for (double& g : grads) g = gauss(rng);
    adam_step(ps, grads, state, config);
  }
  const std::size_t g0 = mlp.learnable_count();
  log << "    after 10000 steps: g0=" << target.taps[0] << " m=" << state.m[g0]
      << " v=" << state.v[g0] << "\n";
  return target.taps[0] == 1.0 && state.m[g0] == 0.0 && state.v[g0] == 0.0;
}

}  // namespace

int main(int argc, char** argv) {
  Options opts;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--out" && i + 1 < argc) {
      opts.out = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      opts.only.insert(std::atoi(argv[++i]));
    } else if (arg == "--sectors" && i + 1 < argc) {
      opts.sectors = std::atoi(argv[++i]);
    } else if (arg == "--full") {
      opts.full = true;
    } else {
      std::cerr << "usage: tdmr_acceptance [--out DIR] [--only N]... [--sectors N] [--full]\n";
      return 2;
    }
  }
  std::filesystem::create_directories(opts.out);

  struct Criterion {
    int id;
    const char* title;
    std::function<bool(const Options&, std::ostream&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "detector oracle equivalence (1000 blocks, exact)", criterion1},
      {2, "full-chain CE gradient vs central differences", criterion2},
      {3, "dCE/dLLR closed form", criterion3},
      {4, "channel invariants (ITI fit, convolution, jitter, raw BER)", criterion4},
      {6, "ML-adaptation direction in LLR space", criterion6},
      {7, "monic pin and optimizer freeze", criterion7},
      {5, "ordering reproduction at desk scale", criterion5},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!opts.only.empty() && !opts.only.contains(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    bool ok = false;
    std::ostringstream detail;
    try {
      ok = c.run(opts, detail);
    } catch (const std::exception& e) {
      detail << "    exception: " << e.what() << "\n";
    }
    const auto secs =
        std::chrono::duration_cast<std::chrono::duration<double>>(
            std::chrono::steady_clock::now() - start)
            .count();
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": " << c.title << " ("
              << secs << " s)\n"
              << detail.str();
    if (!ok) ++failures;
  }
  if (failures == 0) {
    std::cout << "all acceptance criteria passed\n";
  } else {
    std::cout << failures << " acceptance criteria FAILED\n";
  }
  return failures == 0 ? 0 : 1;
}
