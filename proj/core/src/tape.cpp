#include "tdmr/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace tdmr {

Tape::NodeId Tape::push(Node n) {
  nodes_.push_back(n);
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::constant(double v) { return push({Op::Const, -1, -1, v, 0.0, 0.0}); }

Tape::NodeId Tape::leaf(double v) { return push({Op::Leaf, -1, -1, v, 0.0, 0.0}); }

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  return push({Op::Add, a, b, value(a) + value(b), 1.0, 1.0});
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  return push({Op::Sub, a, b, value(a) - value(b), 1.0, -1.0});
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const double va = value(a);
  const double vb = value(b);
  return push({Op::Mul, a, b, va * vb, vb, va});
}

Tape::NodeId Tape::square(NodeId a) {
  const double va = value(a);
  return push({Op::Square, a, -1, va * va, 2.0 * va, 0.0});
}

Tape::NodeId Tape::tanh(NodeId a) {
  const double t = std::tanh(value(a));
  return push({Op::Tanh, a, -1, t, 1.0 - t * t, 0.0});
}

Tape::NodeId Tape::relu(NodeId a) {
  const double va = value(a);
  // subgradient 0 at the kink
  return push({Op::Relu, a, -1, va > 0.0 ? va : 0.0, va > 0.0 ? 1.0 : 0.0, 0.0});
}

Tape::NodeId Tape::log(NodeId a) {
  const double va = value(a);
  if (!(va > 0.0)) {
    throw std::domain_error("Tape::log: non-positive operand");
  }
  return push({Op::Log, a, -1, std::log(va), 1.0 / va, 0.0});
}

Tape::NodeId Tape::sigmoid(NodeId a) {
  const double va = value(a);
  const double s = va >= 0.0 ? 1.0 / (1.0 + std::exp(-va))
                             : std::exp(va) / (1.0 + std::exp(va));
  return push({Op::Sigmoid, a, -1, s, s * (1.0 - s), 0.0});
}

Tape::NodeId Tape::min2(NodeId a, NodeId b) {
  const double va = value(a);
  const double vb = value(b);
  const bool first = va <= vb;  // tie -> first operand
  return push({Op::Min2, a, b, first ? va : vb, first ? 1.0 : 0.0, first ? 0.0 : 1.0});
}

Tape::NodeId Tape::affine(NodeId bias, std::span<const NodeId> weights,
                          std::span<const double> inputs) {
  if (weights.size() != inputs.size()) {
    throw std::invalid_argument("Tape::affine: weights/inputs size mismatch");
  }
  double acc = value(bias);
  for (std::size_t i = 0; i < weights.size(); ++i) acc += value(weights[i]) * inputs[i];
  Node n{Op::Affine, bias, -1, acc, 1.0, 0.0};
  n.ext_first = static_cast<std::uint32_t>(ext_parents_.size());
  n.ext_count = static_cast<std::uint32_t>(weights.size());
  ext_parents_.insert(ext_parents_.end(), weights.begin(), weights.end());
  ext_partials_.insert(ext_partials_.end(), inputs.begin(), inputs.end());
  return push(n);
}

void Tape::clear() {
  nodes_.clear();
  ext_parents_.clear();
  ext_partials_.clear();
  adjoints_.clear();
}

void Tape::sweep() {
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    const Node& n = nodes_[i];
    const double adj = adjoints_[i];
    if (adj == 0.0) continue;
    if (n.a >= 0) adjoints_[static_cast<std::size_t>(n.a)] += n.da * adj;
    if (n.b >= 0) adjoints_[static_cast<std::size_t>(n.b)] += n.db * adj;
    if (n.op == Op::Affine) {
      const NodeId* parents = &ext_parents_[n.ext_first];
      const double* partials = &ext_partials_[n.ext_first];
      for (std::uint32_t k = 0; k < n.ext_count; ++k) {
        adjoints_[static_cast<std::size_t>(parents[k])] += partials[k] * adj;
      }
    }
  }
}

void Tape::backward(NodeId root) {
  adjoints_.assign(nodes_.size(), 0.0);
  adjoints_.at(static_cast<std::size_t>(root)) = 1.0;
  sweep();
}

void Tape::backward_seeded(std::span<const std::pair<NodeId, double>> seeds) {
  adjoints_.assign(nodes_.size(), 0.0);
  for (const auto& [id, seed] : seeds) {
    adjoints_.at(static_cast<std::size_t>(id)) += seed;
  }
  sweep();
}

void ParamSet::push_group(std::string name, std::span<double> values, bool frozen) {
  groups_.push_back({std::move(name), slots_.size(), values.size()});
  for (double& v : values) {
    slots_.push_back(&v);
    frozen_.push_back(frozen ? 1 : 0);
  }
}

void ParamSet::push_scalar(std::string name, double* value, bool frozen) {
  groups_.push_back({std::move(name), slots_.size(), 1});
  slots_.push_back(value);
  frozen_.push_back(frozen ? 1 : 0);
}

const std::string& ParamSet::group_of(std::size_t i) const {
  for (const Group& g : groups_) {
    if (i >= g.first && i < g.first + g.count) return g.name;
  }
  throw std::out_of_range("ParamSet::group_of");
}

std::vector<double> ParamSet::snapshot() const {
  std::vector<double> out(slots_.size());
  for (std::size_t i = 0; i < slots_.size(); ++i) out[i] = *slots_[i];
  return out;
}

void ParamSet::restore(std::span<const double> values) {
  if (values.size() != slots_.size()) {
    throw std::invalid_argument("ParamSet::restore: size mismatch");
  }
  for (std::size_t i = 0; i < slots_.size(); ++i) *slots_[i] = values[i];
}

FiniteDiffResult finite_diff(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> params, double h) {
  return finite_diff(f, nullptr, params, h);
}

FiniteDiffResult finite_diff(const std::function<double(std::span<const double>)>& f,
                             const std::function<std::uint64_t(std::span<const double>)>& signature,
                             std::span<const double> params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff: h must be positive");
  std::vector<double> p(params.begin(), params.end());
  FiniteDiffResult res;
  res.gradient.resize(p.size());
  res.valid.assign(p.size(), 1);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double fp = f(p);
    const std::uint64_t sig_p = signature ? signature(p) : 0;
    p[i] = saved - h;
    const double fm = f(p);
    const std::uint64_t sig_m = signature ? signature(p) : 0;
    p[i] = saved;
    res.gradient[i] = (fp - fm) / (2.0 * h);
    if (signature && sig_p != sig_m) res.valid[i] = 0;
  }
  return res;
}

}  // namespace tdmr
