#pragma once

// Trellis detection matched to a PR target: hard Viterbi (add-compare-select
// with traceback), exact max-log soft output via forward/backward min-sum
// over the whole block, an exhaustive small-block oracle, and the subgradient
// backward pass that routes d(cost)/d(LLR) to the equalized samples and the
// target taps along the recorded argmin paths.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tdmr/equalizer.hpp"

namespace tdmr {

struct Trellis {
  PrTarget target;
  int tap_count = 0;  // L
  int n_states = 1;   // 2^(L-1)
  // branch (state s, input u): u index 0 = bit -1, 1 = bit +1
  std::vector<std::array<int, 2>> next_state;
  std::vector<std::array<double, 2>> output;  // noiseless expected y

  // bit hypothesized at lag m by branch (s,u): lag 0 is the input bit,
  // lag m>=1 reads the state history
  int hypothesis_bit(int state, int u_idx, int lag) const {
    if (lag == 0) return u_idx ? 1 : -1;
    return ((state >> (lag - 1)) & 1) ? 1 : -1;
  }
};

Trellis build_trellis(const PrTarget& target);

inline double branch_metric(double y, double expected) {
  const double e = y - expected;
  return e * e;
}

struct DetectorOptions {
  // state metrics at block start; empty = known all-(-1) start (state 0)
  std::vector<double> initial_metrics;
  bool keep_bookkeeping = false;
  // test hook: constant added to every branch metric of stage t
  std::span<const double> stage_offsets;
  // non-empty: dump per-stage state metrics as CSV
  std::string dump_state_metrics_csv;
};

struct SoftDecision {
  std::vector<std::int8_t> hard;  // +-1, global minimum-metric path
  std::vector<double> llr;        // positive favors +1
  std::vector<double> final_metrics;

  struct Bookkeeping {
    int n_states = 0;
    std::vector<double> alpha;          // (n+1) x S prefix min-sums
    std::vector<double> beta;           // (n+1) x S suffix min-sums
    std::vector<std::int32_t> pred;     // n x S chosen branch packed (s<<1|u), -1 unreachable
    std::vector<std::int8_t> succ;      // n x S chosen input continuing from state s
    std::vector<std::array<std::int32_t, 2>> best;  // per stage: argmin branch per input bit
    std::uint64_t y_digest = 0;
    std::uint64_t choice_digest = 0;  // argmin signature (kink detection)
  };
  std::optional<Bookkeeping> book;
};

// Exact max-log LLRs over the block: llr_t = min PM over paths with u_t=-1
// minus min PM over paths with u_t=+1.
SoftDecision maxlog_llr(const Trellis& trellis, std::span<const double> y,
                        const DetectorOptions& options = {});

// Minimum-metric path input bits (ACS forward, traceback from the best final
// state; start fixed at the all-(-1) state unless initial metrics are given).
std::vector<std::int8_t> viterbi_hard(const Trellis& trellis, std::span<const double> y,
                                      const DetectorOptions& options = {});

// Exhaustive 2^n enumeration for n <= 16; same tie-break (first candidate in
// ascending-state, -1-before-+1 order wins).
SoftDecision brute_force_llr(const Trellis& trellis, std::span<const double> y,
                             const DetectorOptions& options = {});

struct LlrGradients {
  std::vector<double> d_samples;  // dJ/dy_m
  std::vector<double> d_taps;     // dJ/dg_j (all taps; caller masks frozen/fixed)
};

// Subgradient of upstream . llr w.r.t. samples and taps, flowing only along
// the two recorded argmin paths per bit. Requires bookkeeping from a
// maxlog_llr call on the same samples (throws on stale bookkeeping).
LlrGradients llr_backward(const Trellis& trellis, std::span<const double> y,
                          const SoftDecision& soft, std::span<const double> upstream);

}  // namespace tdmr
