#pragma once

// Reverse-mode scalar tape. The detector argmin structure changes with every
// batch, so the graph is rebuilt per forward pass: nodes are appended in
// evaluation order (parents always precede children) and one reverse sweep
// fills every adjoint. All values and adjoints are double.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tdmr {

class Tape {
 public:
  using NodeId = std::int32_t;

  enum class Op : std::uint8_t {
    Const,
    Leaf,
    Add,
    Sub,
    Mul,
    Square,
    Tanh,
    Relu,
    Log,
    Sigmoid,
    Min2,
    Affine,
  };

  NodeId constant(double v);
  NodeId leaf(double v);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId square(NodeId a);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId log(NodeId a);  // throws std::domain_error on non-positive input
  NodeId sigmoid(NodeId a);
  // min of two nodes; gradient flows to the smaller operand, ties to the first
  NodeId min2(NodeId a, NodeId b);
  // fused bias + sum_i weights[i] * inputs[i] with constant inputs; one node
  // per neuron keeps batch tapes small
  NodeId affine(NodeId bias, std::span<const NodeId> weights, std::span<const double> inputs);

  double value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::size_t size() const { return nodes_.size(); }
  void clear();

  // Seeds d(root)=1 and propagates to every reachable node.
  void backward(NodeId root);
  // Seeds several nodes at once (used to inject upstream gradients computed
  // outside the tape, e.g. the detector subgradient w.r.t. equalized samples).
  void backward_seeded(std::span<const std::pair<NodeId, double>> seeds);

  double adjoint(NodeId id) const { return adjoints_[static_cast<std::size_t>(id)]; }

 private:
  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    double value = 0.0;
    double da = 0.0;  // local partial w.r.t. a
    double db = 0.0;  // local partial w.r.t. b
    std::uint32_t ext_first = 0;  // Affine: extra parents/partials slice
    std::uint32_t ext_count = 0;
  };

  NodeId push(Node n);
  void sweep();

  std::vector<Node> nodes_;
  std::vector<NodeId> ext_parents_;
  std::vector<double> ext_partials_;
  std::vector<double> adjoints_;
};

// Named learnable groups referencing externally owned storage; the frozen
// mask marks entries whose gradient is recorded but whose update is skipped
// (the monic target tap).
class ParamSet {
 public:
  void push_group(std::string name, std::span<double> values, bool frozen = false);
  void push_scalar(std::string name, double* value, bool frozen = false);

  std::size_t size() const { return slots_.size(); }
  double get(std::size_t i) const { return *slots_[i]; }
  void set(std::size_t i, double v) { *slots_[i] = v; }
  bool frozen(std::size_t i) const { return frozen_[i] != 0; }
  const std::string& group_of(std::size_t i) const;

  std::vector<double> snapshot() const;
  void restore(std::span<const double> values);

 private:
  struct Group {
    std::string name;
    std::size_t first;
    std::size_t count;
  };
  std::vector<double*> slots_;
  std::vector<std::uint8_t> frozen_;
  std::vector<Group> groups_;
};

struct FiniteDiffResult {
  std::vector<double> gradient;
  // 0 where a kink was detected (argmin signature changed between the +h and
  // -h evaluations) and the central difference is not trustworthy
  std::vector<std::uint8_t> valid;
};

// Central differences (f(p+h)-f(p-h))/(2h), one coordinate at a time.
FiniteDiffResult finite_diff(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> params, double h);

// Same, with kink detection: signature(p) must return a digest of every
// argmin choice made while evaluating f(p).
FiniteDiffResult finite_diff(const std::function<double(std::span<const double>)>& f,
                             const std::function<std::uint64_t(std::span<const double>)>& signature,
                             std::span<const double> params, double h);

}  // namespace tdmr
