#include "tdmr/equalizer.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace tdmr {

std::size_t MlpSpec::learnable_count() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const auto fan_in = static_cast<std::size_t>(layer_sizes[l]);
    const auto fan_out = static_cast<std::size_t>(layer_sizes[l + 1]);
    count += fan_in * fan_out + fan_out;
  }
  return count;
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw std::invalid_argument("MlpSpec: need input and output sizes");
  if (layer_sizes.size() > 4) throw std::invalid_argument("MlpSpec: at most two hidden layers");
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("MlpSpec: layer sizes must be positive");
  }
  if (layer_sizes.front() % 2 != 0) {
    throw std::invalid_argument("MlpSpec: input size must be 2*d_in");
  }
  if (layer_sizes.back() != 1) throw std::invalid_argument("MlpSpec: output size must be 1");
}

MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  MlpParams params;
  params.spec = spec;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const auto fan_in = static_cast<std::size_t>(spec.layer_sizes[l]);
    const auto fan_out = static_cast<std::size_t>(spec.layer_sizes[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-bound, bound);
    std::vector<double> w(fan_in * fan_out);
    for (double& v : w) v = uni(rng);
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(fan_out, 0.0);
  }
  return params;
}

double mlp_forward(const MlpParams& params, std::span<const double> window) {
  const MlpSpec& spec = params.spec;
  if (window.size() != static_cast<std::size_t>(spec.input_size())) {
    throw std::invalid_argument("mlp_forward: window size mismatch");
  }
  std::vector<double> cur(window.begin(), window.end());
  std::vector<double> next;
  const std::size_t n_layers = params.weights.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto fan_in = static_cast<std::size_t>(spec.layer_sizes[l]);
    const auto fan_out = static_cast<std::size_t>(spec.layer_sizes[l + 1]);
    next.assign(fan_out, 0.0);
    const auto& w = params.weights[l];
    for (std::size_t o = 0; o < fan_out; ++o) {
      double acc = params.biases[l][o];
      const double* row = &w[o * fan_in];
      for (std::size_t i = 0; i < fan_in; ++i) acc += row[i] * cur[i];
      if (l + 1 < n_layers) {
        acc = spec.activation == Activation::Tanh ? std::tanh(acc) : (acc > 0.0 ? acc : 0.0);
      }
      next[o] = acc;
    }
    cur.swap(next);
  }
  return cur[0];
}

MlpTapeBinding bind_mlp(Tape& tape, const MlpParams& params) {
  MlpTapeBinding binding;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    std::vector<Tape::NodeId> wl;
    wl.reserve(params.weights[l].size());
    for (double v : params.weights[l]) wl.push_back(tape.leaf(v));
    binding.weights.push_back(std::move(wl));
    std::vector<Tape::NodeId> bl;
    bl.reserve(params.biases[l].size());
    for (double v : params.biases[l]) bl.push_back(tape.leaf(v));
    binding.biases.push_back(std::move(bl));
  }
  return binding;
}

Tape::NodeId mlp_forward(Tape& tape, const MlpTapeBinding& binding, const MlpSpec& spec,
                         std::span<const double> window) {
  if (window.size() != static_cast<std::size_t>(spec.input_size())) {
    throw std::invalid_argument("mlp_forward(tape): window size mismatch");
  }
  const std::size_t n_layers = binding.weights.size();
  if (n_layers == 1) {
    // linear equalizer: a single affine node over the window
    return tape.affine(binding.biases[0][0], binding.weights[0], window);
  }
  // first layer consumes the constant window via fused affine nodes; deeper
  // layers go through scalar ops since their inputs are tape nodes
  std::vector<Tape::NodeId> cur;
  {
    const auto fan_in = static_cast<std::size_t>(spec.layer_sizes[0]);
    const auto fan_out = static_cast<std::size_t>(spec.layer_sizes[1]);
    cur.reserve(fan_out);
    for (std::size_t o = 0; o < fan_out; ++o) {
      std::span<const Tape::NodeId> row(&binding.weights[0][o * fan_in], fan_in);
      Tape::NodeId acc = tape.affine(binding.biases[0][o], row, window);
      cur.push_back(spec.activation == Activation::Tanh ? tape.tanh(acc) : tape.relu(acc));
    }
  }
  std::vector<Tape::NodeId> next;
  for (std::size_t l = 1; l < n_layers; ++l) {
    const auto fan_in = static_cast<std::size_t>(spec.layer_sizes[l]);
    const auto fan_out = static_cast<std::size_t>(spec.layer_sizes[l + 1]);
    next.clear();
    for (std::size_t o = 0; o < fan_out; ++o) {
      Tape::NodeId acc = binding.biases[l][o];
      for (std::size_t i = 0; i < fan_in; ++i) {
        acc = tape.add(acc, tape.mul(binding.weights[l][o * fan_in + i], cur[i]));
      }
      if (l + 1 < n_layers) {
        acc = spec.activation == Activation::Tanh ? tape.tanh(acc) : tape.relu(acc);
      }
      next.push_back(acc);
    }
    cur.swap(next);
  }
  return cur[0];
}

double reference_output(const PrTarget& target, std::span<const std::int8_t> bits,
                        std::ptrdiff_t k) {
  const int L = target.length();
  if (k < L - 1) throw std::out_of_range("reference_output: index underflow");
  if (k >= static_cast<std::ptrdiff_t>(bits.size())) {
    throw std::out_of_range("reference_output: index past end");
  }
  double acc = 0.0;
  for (int m = 0; m < L; ++m) {
    acc += target.taps[static_cast<std::size_t>(m)] * bits[static_cast<std::size_t>(k - m)];
  }
  return acc;
}

double reference_output_padded(const PrTarget& target, std::span<const std::int8_t> bits,
                               std::ptrdiff_t k) {
  const int L = target.length();
  double acc = 0.0;
  for (int m = 0; m < L; ++m) {
    const std::ptrdiff_t idx = k - m;
    const double bit = (idx >= 0 && idx < static_cast<std::ptrdiff_t>(bits.size()))
                           ? bits[static_cast<std::size_t>(idx)]
                           : -1.0;
    acc += target.taps[static_cast<std::size_t>(m)] * bit;
  }
  return acc;
}

void enforce_monic(PrTarget& target) {
  if (!target.monic) return;
  if (target.taps.empty()) throw std::invalid_argument("enforce_monic: empty target");
  target.taps[0] = 1.0;
}

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  nlohmann::json j{
      {"layer_sizes", ckpt.params.spec.layer_sizes},
      {"activation", ckpt.params.spec.activation == Activation::Tanh ? "tanh" : "relu"},
      {"weights", ckpt.params.weights},
      {"biases", ckpt.params.biases},
      {"target_taps", ckpt.target.taps},
      {"monic", ckpt.target.monic},
      {"train_steps", ckpt.train_steps},
  };
  std::ofstream out(file);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + file.string());
  out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + file.string());
  nlohmann::json j;
  in >> j;
  Checkpoint ckpt;
  ckpt.params.spec.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  const auto act = j.at("activation").get<std::string>();
  if (act == "tanh") {
    ckpt.params.spec.activation = Activation::Tanh;
  } else if (act == "relu") {
    ckpt.params.spec.activation = Activation::Relu;
  } else {
    throw std::runtime_error("load_checkpoint: unknown activation " + act);
  }
  ckpt.params.spec.validate();
  ckpt.params.weights = j.at("weights").get<std::vector<std::vector<double>>>();
  ckpt.params.biases = j.at("biases").get<std::vector<std::vector<double>>>();
  ckpt.target.taps = j.at("target_taps").get<std::vector<double>>();
  ckpt.target.monic = j.at("monic").get<bool>();
  ckpt.train_steps = j.at("train_steps").get<std::int64_t>();
  return ckpt;
}

}  // namespace tdmr
