#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <random>
#include <vector>

#include "tdmr/tape.hpp"

using tdmr::ParamSet;
using tdmr::Tape;
using tdmr::finite_diff;

TEST_CASE("square derivative") {
  Tape tape;
  const auto x = tape.leaf(3.0);
  const auto y = tape.square(x);
  CHECK(tape.value(y) == 9.0);
  tape.backward(y);
  CHECK(tape.adjoint(x) == 6.0);
}

TEST_CASE("tanh derivative at origin") {
  Tape tape;
  const auto x = tape.leaf(0.0);
  const auto y = tape.tanh(x);
  tape.backward(y);
  CHECK(tape.adjoint(x) == 1.0);
}

TEST_CASE("min2 subgradient at non-tie") {
  Tape tape;
  const auto a = tape.leaf(2.0);
  const auto b = tape.leaf(5.0);
  const auto m = tape.min2(a, b);
  CHECK(tape.value(m) == 2.0);
  tape.backward(m);
  CHECK(tape.adjoint(a) == 1.0);
  CHECK(tape.adjoint(b) == 0.0);
}

TEST_CASE("min2 tie goes to the first operand") {
  Tape tape;
  const auto a = tape.leaf(4.0);
  const auto b = tape.leaf(4.0);
  const auto m = tape.min2(a, b);
  tape.backward(m);
  CHECK(tape.adjoint(a) == 1.0);
  CHECK(tape.adjoint(b) == 0.0);
}

TEST_CASE("linear form adjoints are the inputs") {
  Tape tape;
  const std::vector<double> x{1.5, -2.0, 0.25};
  std::vector<Tape::NodeId> w;
  for (int i = 0; i < 3; ++i) w.push_back(tape.leaf(0.1 * (i + 1)));
  Tape::NodeId acc = tape.constant(0.0);
  for (int i = 0; i < 3; ++i) {
    acc = tape.add(acc, tape.mul(w[static_cast<std::size_t>(i)],
                                 tape.constant(x[static_cast<std::size_t>(i)])));
  }
  tape.backward(acc);
  for (int i = 0; i < 3; ++i) {
    CHECK(tape.adjoint(w[static_cast<std::size_t>(i)]) == x[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("chain rule through tanh at zero weight") {
  Tape tape;
  const double x = 0.7;
  const auto w = tape.leaf(0.0);
  const auto y = tape.tanh(tape.mul(w, tape.constant(x)));
  tape.backward(y);
  CHECK(tape.adjoint(w) == doctest::Approx(x).epsilon(1e-15));
}

TEST_CASE("affine node value and gradient") {
  Tape tape;
  const std::vector<double> x{0.5, -1.25, 2.0, 0.125};
  const auto bias = tape.leaf(0.75);
  std::vector<Tape::NodeId> w;
  for (int i = 0; i < 4; ++i) w.push_back(tape.leaf(0.3 - 0.2 * i));
  const auto y = tape.affine(bias, w, x);

  double expect = 0.75;
  for (int i = 0; i < 4; ++i) expect += (0.3 - 0.2 * i) * x[static_cast<std::size_t>(i)];
  CHECK(tape.value(y) == expect);

  tape.backward(y);
  CHECK(tape.adjoint(bias) == 1.0);
  for (int i = 0; i < 4; ++i) {
    CHECK(tape.adjoint(w[static_cast<std::size_t>(i)]) == x[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("log rejects non-positive operands") {
  Tape tape;
  const auto x = tape.leaf(-1.0);
  CHECK_THROWS_AS((void)tape.log(x), std::domain_error);
  const auto z = tape.leaf(0.0);
  CHECK_THROWS_AS((void)tape.log(z), std::domain_error);
}

TEST_CASE("relu subgradient") {
  Tape tape;
  const auto a = tape.leaf(-2.0);
  const auto b = tape.leaf(0.0);
  const auto c = tape.leaf(3.0);
  const auto y = tape.add(tape.relu(a), tape.add(tape.relu(b), tape.relu(c)));
  tape.backward(y);
  CHECK(tape.adjoint(a) == 0.0);
  CHECK(tape.adjoint(b) == 0.0);
  CHECK(tape.adjoint(c) == 1.0);
}

TEST_CASE("composite matches central differences") {
  // f(p) = sigmoid(p0 * p1) + log(square(p0) + 1) * tanh(p2) + min2(p1, p2)
  auto f = [](std::span<const double> p) {
    Tape tape;
    const auto p0 = tape.leaf(p[0]);
    const auto p1 = tape.leaf(p[1]);
    const auto p2 = tape.leaf(p[2]);
    const auto t1 = tape.sigmoid(tape.mul(p0, p1));
    const auto t2 = tape.mul(tape.log(tape.add(tape.square(p0), tape.constant(1.0))),
                             tape.tanh(p2));
    const auto t3 = tape.min2(p1, p2);
    return tape.value(tape.add(t1, tape.add(t2, t3)));
  };
  const std::vector<double> p{0.8, -0.4, 1.1};

  Tape tape;
  const auto p0 = tape.leaf(p[0]);
  const auto p1 = tape.leaf(p[1]);
  const auto p2 = tape.leaf(p[2]);
  const auto t1 = tape.sigmoid(tape.mul(p0, p1));
  const auto t2 =
      tape.mul(tape.log(tape.add(tape.square(p0), tape.constant(1.0))), tape.tanh(p2));
  const auto t3 = tape.min2(p1, p2);
  const auto root = tape.add(t1, tape.add(t2, t3));
  tape.backward(root);

  const auto fd = finite_diff(f, p, 1e-5);
  CHECK(tape.adjoint(p0) == doctest::Approx(fd.gradient[0]).epsilon(1e-7));
  CHECK(tape.adjoint(p1) == doctest::Approx(fd.gradient[1]).epsilon(1e-7));
  CHECK(tape.adjoint(p2) == doctest::Approx(fd.gradient[2]).epsilon(1e-7));
}

TEST_CASE("tape replay is deterministic bit for bit") {
  auto run = [](std::vector<double>& adj) {
    Tape tape;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<Tape::NodeId> leaves;
    for (int i = 0; i < 20; ++i) leaves.push_back(tape.leaf(uni(rng)));
    Tape::NodeId acc = tape.constant(0.0);
    for (std::size_t i = 0; i + 1 < leaves.size(); ++i) {
      acc = tape.add(acc, tape.tanh(tape.mul(leaves[i], leaves[i + 1])));
      acc = tape.min2(acc, tape.square(leaves[i]));
    }
    tape.backward(acc);
    adj.clear();
    for (const auto id : leaves) adj.push_back(tape.adjoint(id));
    return tape.value(acc);
  };
  std::vector<double> a1, a2;
  const double v1 = run(a1);
  const double v2 = run(a2);
  CHECK(v1 == v2);
  CHECK(a1 == a2);
}

TEST_CASE("backward_seeded accumulates upstream seeds") {
  Tape tape;
  const auto w = tape.leaf(2.0);
  const auto y1 = tape.mul(w, tape.constant(3.0));
  const auto y2 = tape.mul(w, tape.constant(5.0));
  const std::vector<std::pair<Tape::NodeId, double>> seeds{{y1, 0.5}, {y2, -1.0}};
  tape.backward_seeded(seeds);
  CHECK(tape.adjoint(w) == 0.5 * 3.0 - 1.0 * 5.0);
}

TEST_CASE("finite_diff basics") {
  auto f = [](std::span<const double> p) { return p[0] * p[0]; };
  const std::vector<double> p{1.0};
  const auto fd = finite_diff(f, p, 1e-5);
  CHECK(fd.gradient[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(fd.valid[0] == 1);
  CHECK_THROWS_AS(finite_diff(f, p, 0.0), std::invalid_argument);
}

TEST_CASE("finite_diff flags kinks via the argmin signature") {
  // f = min(p0, c): at p0 == c the argmin flips between the +h and -h probes
  const double c = 0.5;
  auto f = [c](std::span<const double> p) { return std::min(p[0], c); };
  auto sig = [c](std::span<const double> p) -> std::uint64_t { return p[0] <= c ? 1 : 2; };
  const std::vector<double> at_tie{0.5};
  const auto fd = finite_diff(f, sig, at_tie, 1e-5);
  CHECK(fd.valid[0] == 0);
  const std::vector<double> away{0.2};
  const auto fd2 = finite_diff(f, sig, away, 1e-5);
  CHECK(fd2.valid[0] == 1);
  CHECK(fd2.gradient[0] == doctest::Approx(1.0));
}

TEST_CASE("ParamSet snapshot, restore and frozen mask") {
  std::vector<double> w{1.0, 2.0, 3.0};
  double g0 = 1.0;
  ParamSet ps;
  ps.push_group("w", w);
  ps.push_scalar("g0", &g0, /*frozen=*/true);
  CHECK(ps.size() == 4);
  CHECK(ps.frozen(3));
  CHECK_FALSE(ps.frozen(0));
  CHECK(ps.group_of(1) == "w");
  CHECK(ps.group_of(3) == "g0");

  const auto snap = ps.snapshot();
  ps.set(0, 9.0);
  CHECK(w[0] == 9.0);
  ps.restore(snap);
  CHECK(w[0] == 1.0);
  CHECK_THROWS_AS(ps.restore(std::vector<double>{1.0}), std::invalid_argument);
}
