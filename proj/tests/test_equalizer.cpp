#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "tdmr/equalizer.hpp"
#include "tdmr/tape.hpp"

using namespace tdmr;

namespace {

// zero-padded full convolution, the hand oracle for the reference sub-net
std::vector<double> full_convolution(const std::vector<double>& g, const std::vector<double>& u) {
  std::vector<double> out(g.size() + u.size() - 1, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < u.size(); ++j) out[i + j] += g[i] * u[j];
  }
  return out;
}

std::vector<double> random_window(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> w(n);
  for (double& v : w) v = gauss(rng);
  return w;
}

}  // namespace

TEST_CASE("learnable counts for the studied structures") {
  CHECK(MlpSpec{{22, 1}}.learnable_count() == 23);
  CHECK(MlpSpec{{22, 4, 1}}.learnable_count() == 97);
  CHECK(MlpSpec{{22, 6, 1}}.learnable_count() == 145);
  CHECK(MlpSpec{{22, 6, 4, 1}}.learnable_count() == 171);
  CHECK(MlpSpec{{98, 1}}.learnable_count() == 99);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(MlpSpec{{22}}.validate(), std::invalid_argument);
  CHECK_THROWS_AS((MlpSpec{{21, 1}}).validate(), std::invalid_argument);          // odd input
  CHECK_THROWS_AS((MlpSpec{{22, 2}}).validate(), std::invalid_argument);          // output != 1
  CHECK_THROWS_AS((MlpSpec{{22, 4, 4, 4, 1}}).validate(), std::invalid_argument); // l > 2
}

TEST_CASE("init is deterministic, Glorot-bounded, with zero biases") {
  const MlpSpec spec{{22, 6, 1}, Activation::Tanh};
  const auto a = init_mlp(spec, 5);
  const auto b = init_mlp(spec, 5);
  const auto c = init_mlp(spec, 6);
  CHECK(a.weights == b.weights);
  CHECK(a.weights != c.weights);
  const double bound0 = std::sqrt(6.0 / (22 + 6));
  for (double w : a.weights[0]) CHECK(std::abs(w) <= bound0);
  for (const auto& layer : a.biases) {
    for (double v : layer) CHECK(v == 0.0);
  }
}

TEST_CASE("all-zero parameters give zero output") {
  MlpParams p = init_mlp({{22, 4, 1}, Activation::Tanh}, 1);
  for (auto& layer : p.weights) std::fill(layer.begin(), layer.end(), 0.0);
  const auto w = random_window(22, 2);
  CHECK(mlp_forward(p, w) == 0.0);
}

TEST_CASE("zero-hidden-layer network is exactly an FIR filter") {
  MlpParams p = init_mlp({{22, 1}}, 3);
  std::fill(p.biases[0].begin(), p.biases[0].end(), 0.0);
  const auto w = random_window(22, 4);
  double dot = 0.0;
  for (std::size_t i = 0; i < 22; ++i) dot += p.weights[0][i] * w[i];
  CHECK(mlp_forward(p, w) == doctest::Approx(dot).epsilon(1e-15));
}

TEST_CASE("tanh hidden activations stay inside (-1, 1)") {
  MlpParams p = init_mlp({{6, 4, 1}, Activation::Tanh}, 9);
  for (auto& v : p.weights[0]) v *= 50.0;  // saturate
  // with unit output weights the output is bounded by the hidden fan-in
  std::fill(p.weights[1].begin(), p.weights[1].end(), 1.0);
  std::fill(p.biases[1].begin(), p.biases[1].end(), 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = random_window(6, 100 + static_cast<std::uint64_t>(trial));
    CHECK(std::abs(mlp_forward(p, w)) < 4.0);
  }
}

TEST_CASE("relu hidden activations are non-negative") {
  MlpParams p = init_mlp({{6, 4, 1}, Activation::Relu}, 10);
  // negative output weights cannot make the output positive if hiddens are >= 0
  std::fill(p.weights[1].begin(), p.weights[1].end(), -1.0);
  std::fill(p.biases[1].begin(), p.biases[1].end(), 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = random_window(6, 200 + static_cast<std::uint64_t>(trial));
    CHECK(mlp_forward(p, w) <= 0.0);
  }
}

TEST_CASE("tape forward equals the value forward bit for bit") {
  for (const MlpSpec spec : {MlpSpec{{22, 1}, Activation::Tanh},
                             MlpSpec{{22, 6, 1}, Activation::Tanh},
                             MlpSpec{{22, 6, 1}, Activation::Relu},
                             MlpSpec{{22, 6, 4, 1}, Activation::Tanh}}) {
    const MlpParams p = init_mlp(spec, 77);
    Tape tape;
    const MlpTapeBinding binding = bind_mlp(tape, p);
    for (int trial = 0; trial < 5; ++trial) {
      const auto w = random_window(22, 300 + static_cast<std::uint64_t>(trial));
      const auto node = mlp_forward(tape, binding, spec, w);
      CHECK(tape.value(node) == mlp_forward(p, w));
    }
  }
}

TEST_CASE("tape gradient of the MLP matches finite differences") {
  const MlpSpec spec{{6, 3, 1}, Activation::Tanh};
  MlpParams p = init_mlp(spec, 13);
  const auto window = random_window(6, 14);

  std::vector<double> flat;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    flat.insert(flat.end(), p.weights[l].begin(), p.weights[l].end());
    flat.insert(flat.end(), p.biases[l].begin(), p.biases[l].end());
  }
  auto rebuild = [&](std::span<const double> v) {
    MlpParams q = p;
    std::size_t idx = 0;
    for (std::size_t l = 0; l < q.weights.size(); ++l) {
      for (double& x : q.weights[l]) x = v[idx++];
      for (double& x : q.biases[l]) x = v[idx++];
    }
    return q;
  };
  auto f = [&](std::span<const double> v) { return mlp_forward(rebuild(v), window); };

  Tape tape;
  const MlpTapeBinding binding = bind_mlp(tape, p);
  const auto node = mlp_forward(tape, binding, spec, window);
  tape.backward(node);
  std::vector<double> analytic;
  for (std::size_t l = 0; l < binding.weights.size(); ++l) {
    for (auto id : binding.weights[l]) analytic.push_back(tape.adjoint(id));
    for (auto id : binding.biases[l]) analytic.push_back(tape.adjoint(id));
  }

  const auto fd = finite_diff(f, flat, 1e-6);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    CHECK(analytic[i] == doctest::Approx(fd.gradient[i]).epsilon(1e-6));
  }
}

TEST_CASE("reference output matches the hand convolution") {
  const PrTarget target{{4.0, 7.0, 1.0}, false};
  const std::vector<std::int8_t> u{1, -1, 1};
  const auto conv = full_convolution({4.0, 7.0, 1.0}, {1.0, -1.0, 1.0});
  CHECK(conv == std::vector<double>{4.0, 3.0, -2.0, 6.0, 1.0});
  // the operator covers the fully-overlapped region
  CHECK(reference_output(target, u, 2) == conv[2]);
  CHECK_THROWS_AS(reference_output(target, u, 1), std::out_of_range);
  CHECK_THROWS_AS(reference_output(target, u, 3), std::out_of_range);
}

TEST_CASE("identity target reproduces the bits") {
  const PrTarget target{{1.0}, true};
  const std::vector<std::int8_t> u{1, -1, -1, 1};
  for (std::size_t k = 0; k < u.size(); ++k) {
    CHECK(reference_output(target, u, static_cast<std::ptrdiff_t>(k)) == u[k]);
  }
}

TEST_CASE("adapted 5-tap target steady-state level") {
  const PrTarget target{{1.0, 0.5367, 0.0781, -0.1535, 0.0347}, true};
  const std::vector<std::int8_t> u(16, 1);
  CHECK(reference_output(target, u, 8) == doctest::Approx(1.4960).epsilon(1e-12));
}

TEST_CASE("padded reference uses -1 outside the sector") {
  const PrTarget target{{1.0, 0.5}, true};
  const std::vector<std::int8_t> u{1, 1};
  CHECK(reference_output_padded(target, u, 0) == doctest::Approx(1.0 - 0.5));
  CHECK(reference_output_padded(target, u, -3) == doctest::Approx(-1.5));
}

TEST_CASE("equalizer error") {
  CHECK(equalizer_error(1.0, 1.0) == 0.0);
  CHECK(equalizer_error(1.0, -1.0) == 2.0);
}

TEST_CASE("monic pinning") {
  PrTarget target{{0.97, 0.4, -0.2}, true};
  enforce_monic(target);
  CHECK(target.taps[0] == 1.0);
  CHECK(target.taps[1] == 0.4);
  CHECK(target.taps[2] == -0.2);
  PrTarget fixed{{4.0, 7.0, 1.0}, false};
  enforce_monic(fixed);
  CHECK(fixed.taps[0] == 4.0);  // no-op without the monic flag
}

TEST_CASE("a monic target never produces an all-zero reference") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> coin(0, 1);
  PrTarget target{{1.0, -0.9, 0.8, -0.7, 0.6}, true};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::int8_t> u(32);
    for (auto& b : u) b = coin(rng) ? 1 : -1;
    double max_abs = 0.0;
    for (std::size_t k = 4; k < u.size(); ++k) {
      max_abs = std::max(max_abs,
                         std::abs(reference_output(target, u, static_cast<std::ptrdiff_t>(k))));
    }
    CHECK(max_abs > 0.0);
  }
}

TEST_CASE("checkpoint roundtrip") {
  const auto file = std::filesystem::temp_directory_path() / "tdmr_ckpt_test.json";
  Checkpoint ckpt;
  ckpt.params = init_mlp({{22, 6, 1}, Activation::Relu}, 55);
  ckpt.target = PrTarget{{1.0, 0.5367, 0.0781, -0.1535, 0.0347}, true};
  ckpt.train_steps = 12345;
  save_checkpoint(file, ckpt);
  const Checkpoint back = load_checkpoint(file);
  CHECK(back.params.spec.layer_sizes == ckpt.params.spec.layer_sizes);
  CHECK(back.params.spec.activation == Activation::Relu);
  CHECK(back.params.weights == ckpt.params.weights);
  CHECK(back.params.biases == ckpt.params.biases);
  CHECK(back.target.taps == ckpt.target.taps);
  CHECK(back.target.monic);
  CHECK(back.train_steps == 12345);
  std::filesystem::remove(file);
}
