#pragma once

// Linear and MLP equalizers. A linear FIR equalizer is the zero-hidden-layer
// case of the same feedforward network; hidden layers use tanh or ReLU, the
// output node is linear, and every layer carries a bias. The partial-response
// target doubles as the reference sub-net: its taps convolve the genie bits
// into the reference signal, with an optional monic pin on tap 0.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tdmr/tape.hpp"

namespace tdmr {

enum class Activation { Tanh, Relu };

struct MlpSpec {
  std::vector<int> layer_sizes;  // [2*d_in, H_1, ..., H_l, 1], l <= 2
  Activation activation = Activation::Tanh;

  int input_size() const { return layer_sizes.front(); }
  int d_in() const { return layer_sizes.front() / 2; }
  int hidden_layers() const { return static_cast<int>(layer_sizes.size()) - 2; }
  std::size_t learnable_count() const;
  void validate() const;  // throws std::invalid_argument
};

struct MlpParams {
  MlpSpec spec;
  std::vector<std::vector<double>> weights;  // [layer], row-major out x in
  std::vector<std::vector<double>> biases;   // [layer]

  std::size_t learnable_count() const { return spec.learnable_count(); }
};

// Glorot-uniform weights, zero biases; deterministic per seed.
MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed);

// Value-only forward pass.
double mlp_forward(const MlpParams& params, std::span<const double> window);

// Tape-recorded forward pass: bind the learnables as leaves once per tape,
// then evaluate any number of windows against the same binding.
struct MlpTapeBinding {
  std::vector<std::vector<Tape::NodeId>> weights;
  std::vector<std::vector<Tape::NodeId>> biases;
};
MlpTapeBinding bind_mlp(Tape& tape, const MlpParams& params);
Tape::NodeId mlp_forward(Tape& tape, const MlpTapeBinding& binding, const MlpSpec& spec,
                         std::span<const double> window);

struct PrTarget {
  std::vector<double> taps;
  bool monic = true;

  int length() const { return static_cast<int>(taps.size()); }
};

// y_hat_k = sum_m g_m u_{k-m}; requires k >= L-1 (throws on underflow).
double reference_output(const PrTarget& target, std::span<const std::int8_t> bits,
                        std::ptrdiff_t k);

// Same, with out-of-range bit indices treated as -1 pads (the synthesis pad
// convention); used at sector edges.
double reference_output_padded(const PrTarget& target, std::span<const std::int8_t> bits,
                               std::ptrdiff_t k);

inline double equalizer_error(double y, double y_hat) { return y - y_hat; }

// Pins tap 0 back to exactly 1. The optimizer additionally freezes that slot,
// so this is a no-op after proper training steps.
void enforce_monic(PrTarget& target);

// Parameter checkpoint (JSON): layer sizes, activation, flattened weights,
// target taps, monic flag, training step count.
struct Checkpoint {
  MlpParams params;
  PrTarget target;
  std::int64_t train_steps = 0;
};
void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace tdmr
