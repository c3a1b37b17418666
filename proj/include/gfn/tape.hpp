#pragma once

#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gfn/tensor.hpp"

namespace gfn::diff {

/// Reverse-mode computation tape over tensors.
///
/// Nodes are appended in topological order (every operand of node i has index
/// < i); values are computed eagerly on insertion and backward() visits nodes
/// exactly once in reverse order. Parameters are bound by pointer via param()
/// and deduplicated per tape, so gradients accumulate at a single leaf no
/// matter how often a parameter is used.
class Tape {
 public:
  using NodeId = std::int32_t;

  /// Leaf bound to a parameter tensor; repeated binds return the same node.
  NodeId param(Tensor* p);
  /// Constant tensor input (no gradient).
  NodeId input(Tensor v);
  /// Constant scalar.
  NodeId constant(double v);

  /// y = x W^T + b with W [out,in], b [out]; x is [in] or a batch [B,in].
  NodeId linear(NodeId x, NodeId w, NodeId b);
  NodeId leaky_relu(NodeId x, double slope);
  NodeId tanh_act(NodeId x);

  /// Per-row log softmax restricted to the given column subsets. Entries
  /// outside a row's subset are set to a large negative constant and carry no
  /// gradient. A row with an empty subset is entirely constant.
  NodeId row_masked_log_softmax(NodeId x, std::vector<std::vector<std::int32_t>> valid);
  /// 1-D convenience wrapper.
  NodeId masked_log_softmax(NodeId x, std::vector<std::int32_t> valid);

  /// Scalar view of one element (flat row-major index).
  NodeId pick(NodeId x, std::int64_t flat_index);
  NodeId pick2(NodeId x, int row, int col);

  /// Scalar node  bias + sum_i coeff_i * term_i  over scalar operands.
  NodeId affine_combine(const std::vector<std::pair<double, NodeId>>& terms, double bias);
  NodeId sum_scalars(const std::vector<NodeId>& ids);
  NodeId mean_scalars(const std::vector<NodeId>& ids);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId square(NodeId a);
  NodeId scale(NodeId a, double c);
  NodeId add_const(NodeId a, double c);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool is_scalar(NodeId id) const { return nodes_[id].value.size() == 1; }
  std::size_t size() const { return nodes_.size(); }

  /// Accumulates d(loss)/d(node) for every node; loss must be scalar.
  void backward(NodeId loss);

  /// Gradient at a node after backward(); zero tensor if the node was never
  /// reached from the loss.
  const Tensor& grad(NodeId id) const;
  /// Gradient of a bound parameter; returns a zero tensor of the parameter's
  /// shape when it does not participate in the loss.
  Tensor grad_for(const Tensor* p) const;

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kConst,
    kLinear,
    kLeakyRelu,
    kTanh,
    kRowMaskedLogSoftmax,
    kPick,
    kAffine,
    kAdd,
    kSub,
    kMul,
    kNeg,
    kSquare,
    kScale,
    kAddConst,
  };

  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    NodeId c = -1;
    double aux = 0.0;
    std::int64_t index = 0;
    Tensor value;
    Tensor grad;
    std::vector<std::vector<std::int32_t>> masks;       // kRowMaskedLogSoftmax
    std::vector<std::pair<double, NodeId>> affine;      // kAffine
  };

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }
  void check_scalar_operands(const std::vector<std::pair<double, NodeId>>& terms) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, NodeId> bound_params_;
  bool backward_done_ = false;
};

}  // namespace gfn::diff
