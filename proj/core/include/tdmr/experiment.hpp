#pragma once

// Experiment orchestration: configured training runs with cached results,
// summary/compare reports, and the preset studies (equalizer structure,
// adaptation criterion, target adaptation, error histograms, adaptation
// curves).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tdmr/config.hpp"
#include "tdmr/training.hpp"

namespace tdmr {

struct RunSummary {
  std::string name;
  std::string equalizer;  // e.g. "[22-6-1] tanh"
  std::string criterion;  // "mse" | "ce"
  bool target_adaptive = false;

  // means over the last training epoch (adaptation-curve semantics)
  double final_mse = 0.0;
  double final_ce = 0.0;
  double final_ber = 0.0;

  // post-training evaluation over the eval sectors (table semantics)
  double eval_mse = 0.0;
  double eval_ce = 0.0;
  double eval_ber = 0.0;
  std::uint64_t eval_bits = 0;
  std::uint64_t eval_errors = 0;

  std::size_t param_count = 0;
  int epochs_trained = 0;
  int epochs_to_convergence = 0;
  int decision_delay = 0;
  std::int64_t steps = 0;
  std::vector<double> target_taps;

  std::uint64_t dataset_digest = 0;
  std::uint64_t config_digest = 0;
  std::string version;

  void write_json(const std::filesystem::path& file) const;
  static RunSummary read_json(const std::filesystem::path& file);
};

// Trains per config on the given sectors (evaluating on eval_sectors, which
// may alias them), writing <name>.curves.csv, <name>.summary.json and
// <name>.checkpoint.json into out_dir. When a summary with the same config
// and dataset digest already exists it is loaded instead of retrained.
RunSummary run_experiment(const ExperimentConfig& config, std::span<const Sector> train_sectors,
                          std::span<const Sector> eval_sectors, std::uint64_t data_digest,
                          const std::filesystem::path& out_dir);

struct CompareReport {
  double ber_a = 0.0;
  double ber_b = 0.0;
  double rel_reduction = 0.0;  // (a - b) / a
  double ci_lo = 0.0;          // 95% binomial CI (delta method)
  double ci_hi = 0.0;
};

// Throws when the two summaries carry different dataset digests.
CompareReport compare_summaries(const RunSummary& a, const RunSummary& b);

struct PresetOptions {
  int sectors = 20;
  bool full = false;  // 100-sector protocol
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";
  bool assert_orderings = false;

  // test hooks: shrink the protocol without touching preset logic
  int bits_override = 0;
  int epochs_cap = 0;
};

// Presets: table1 (LE vs NLE under MSE, fixed target), table2 (NLE variants
// under CE), table3 (overall comparison), fig3 (error histograms), fig4
// (adaptation curves MSE vs CE). Returns a nonzero exit code when
// assert_orderings is set and an expected ordering does not hold.
int run_preset(const std::string& name, const PresetOptions& options, std::ostream& log);

}  // namespace tdmr
