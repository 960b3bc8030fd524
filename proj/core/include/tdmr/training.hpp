#pragma once

// Adaptation of the equalizer (and optionally the PR target) under the MSE
// criterion at the equalizer output or the CE criterion at the detector
// output, with Adam updates per mini batch. MSE batches are shuffled windows;
// CE batches are contiguous spans of a track so the detector sees a coherent
// sample sequence, with state metrics carried warm across spans and gradients
// truncated at span boundaries.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tdmr/channel.hpp"
#include "tdmr/detector.hpp"
#include "tdmr/equalizer.hpp"
#include "tdmr/tape.hpp"

namespace tdmr {

enum class Criterion { Mse, Ce };

struct TargetMode {
  bool adaptive = true;
  std::vector<double> fixed_taps{4.0, 7.0, 1.0};
  int adaptive_len = 5;  // monic, tap 0 pinned to 1

  static TargetMode fixed(std::vector<double> taps) { return {false, std::move(taps), 0}; }
  static TargetMode adaptive_monic(int len = 5) { return {true, {}, len}; }
};

struct TrainConfig {
  Criterion criterion = Criterion::Ce;
  double learning_rate = 1e-3;
  int batch_size = 1024;
  int epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  double llr_clip = 50.0;
  int decision_delay = -1;  // <0: (d_in-1)/2 - L/2 default
  bool auto_delay = false;  // sweep the delay for maximum label correlation

  void validate() const;
};

// Sample-to-label alignment: window centered at sample k is labeled with the
// center-track bit at k - delay and referenced against (u*g)_{k-delay}.
int default_decision_delay(int d_in, int target_len);
int pick_decision_delay(const Sector& sector, const PrTarget& target, int d_in);

double mse_loss(std::span<const double> errors);

double softplus(double x);

// J = mean_k softplus(-u_k . clip(llr_k)); the CE of Bernoulli(sigmoid(llr)))
// against the true bit.
double ce_loss(std::span<const double> llr, std::span<const std::int8_t> bits,
               double clip = 50.0);

// d(CE term)/d(llr): sigmoid(llr) when the true bit is -1, -(1 - sigmoid(llr))
// when it is +1.
double dce_dllr(double llr, std::int8_t bit);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

// Bias-corrected Adam; frozen slots are skipped entirely (their moments stay
// zero).
void adam_step(ParamSet& params, std::span<const double> grads, AdamState& state,
               const TrainConfig& config);

struct MetricsRecord {
  struct Row {
    int epoch;
    int sector;
    double mse;
    double ce;
    double ber;
  };
  std::vector<Row> rows;

  void write_csv(const std::filesystem::path& file) const;
  double final_epoch_mean(double Row::* field) const;
  int last_epoch() const;
  // first epoch after which the epoch-mean BER never improves by more than
  // rel_tol relative
  int epochs_to_convergence(double rel_tol = 0.005) const;
};

// Learnables in a fixed order: MLP weights/biases layer by layer, then the
// target taps when adaptive (tap 0 frozen when monic).
ParamSet make_param_set(MlpParams& params, PrTarget* target);

struct CeChainResult {
  double ce = 0.0;
  std::vector<double> gradient;  // aligned with make_param_set order
  std::uint64_t argmin_signature = 0;
};

// Value and full-chain gradient of the span CE (known-start detection over
// the span), shared by training and the gradient checks.
CeChainResult ce_chain_gradient(MlpParams& params, PrTarget& target, bool adaptive_target,
                                const Sector& sector, std::size_t first_window,
                                std::size_t window_count, int delay, double clip);

// Value-only probe of the same span CE (for finite differencing).
struct CeProbe {
  double ce = 0.0;
  std::uint64_t argmin_signature = 0;
};
CeProbe ce_span_probe(const MlpParams& params, const PrTarget& target, const Sector& sector,
                      std::size_t first_window, std::size_t window_count, int delay, double clip);

struct EvalOptions {
  int decision_delay = -1;   // <0: default for (d_in, L)
  double llr_clip = 50.0;
  int edge_margin = -1;      // windows skipped at each sector end; <0: span + d_in
};

struct SectorEval {
  double mse = 0.0;
  double ce = 0.0;
  double ber = 0.0;
  std::uint64_t bits = 0;
  std::uint64_t errors = 0;
};

SectorEval evaluate_sector(const MlpParams& params, const PrTarget& target, const Sector& sector,
                           const EvalOptions& options = {});

struct EvalResult {
  double mse = 0.0;
  double ce = 0.0;
  double ber = 0.0;
  std::uint64_t bits = 0;
  std::uint64_t errors = 0;
  std::vector<SectorEval> per_sector;
};

// Parallel across sectors; aggregate MSE/CE are bit-weighted means, BER is
// total errors over total bits.
EvalResult evaluate(const MlpParams& params, const PrTarget& target,
                    std::span<const Sector> sectors, const EvalOptions& options = {});

struct TrainResult {
  MlpParams params;
  PrTarget target;
  MetricsRecord curves;
  std::int64_t steps = 0;
  int decision_delay = 0;
};

TrainResult train(const TrainConfig& config, const MlpSpec& spec, const TargetMode& target_mode,
                  std::span<const Sector> sectors);

struct Histogram {
  std::vector<double> edges;    // n_bins + 1
  std::vector<double> density;  // integrates to 1
  double tau = 0.0;
  double tail_mass = 0.0;  // P(|e| > tau)
  std::uint64_t count = 0;

  void write_csv(const std::filesystem::path& file) const;
};

Histogram error_histogram(const MlpParams& params, const PrTarget& target,
                          std::span<const Sector> sectors, int n_bins, double tau,
                          const EvalOptions& options = {});

}  // namespace tdmr
