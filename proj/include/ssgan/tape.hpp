#pragma once

#include <memory>
#include <unordered_map>
#include <vector>

#include "ssgan/tensor.hpp"

namespace ssgan {

enum class OpKind : uint8_t {
  kLeaf,
  kConst,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatmul,
  kTranspose2d,
  kReshape,
  kConcat,
  kSlice,
  kPadTo,
  kBroadcastTo,
  kSumAxes,
  kRelu,
  kLeakyRelu,
  kTanh,
  kSquare,
  kSqrt,
  kAffine,
  kConv2d,
  kConvT2d,
  kConv2dWGrad,
  kConvT2dWGrad,
  kUpsample2x,
  kDownsample2xSum,
};

const char* op_name(OpKind k);

struct OpAttrs {
  std::vector<int64_t> ints;   // axes, starts, or a target shape
  std::vector<int64_t> ints2;  // secondary shape data (weight shape, source shape)
  double a = 1.0;              // affine scale / leaky slope
  double b = 0.0;              // affine shift
  int64_t stride = 1;
  int64_t pad = 0;
  bool keepdims = false;
};

struct VarNode;

// Handle to a recorded value. Copy is cheap (shared node).
class Variable {
 public:
  Variable() = default;
  explicit Variable(std::shared_ptr<VarNode> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  Tensor& value();
  const std::vector<int64_t>& shape() const;
  DType dtype() const;
  int64_t numel() const;
  bool requires_grad() const;
  VarNode* node() const { return node_.get(); }
  std::shared_ptr<VarNode> node_ptr() const { return node_; }

  // Same tensor, no graph history.
  Variable detach() const;

 private:
  std::shared_ptr<VarNode> node_;
};

struct VarNode {
  Tensor value;
  OpKind kind = OpKind::kConst;
  bool requires_grad = false;
  int64_t tape_index = -1;  // -1 for leaves and constants
  std::vector<Variable> inputs;
  OpAttrs attrs;
};

// Differentiable input (parameters, penalty anchors).
Variable make_leaf(Tensor value);
// Value with no gradient flow.
Variable make_constant(Tensor value);

// Ordered record of operations. Inputs of a node always precede it, so a
// single reverse sweep propagates adjoints; adjoint computations append to
// the same tape, which is what makes gradients of gradients valid.
class Tape {
 public:
  Variable record(OpKind kind, Tensor value, std::vector<Variable> inputs, OpAttrs attrs = {});

  int64_t size() const { return static_cast<int64_t>(nodes_.size()); }
  const std::shared_ptr<VarNode>& at(int64_t i) const { return nodes_[static_cast<size_t>(i)]; }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::shared_ptr<VarNode>> nodes_;
};

using GradMap = std::unordered_map<const VarNode*, Variable>;

// Reverse-mode sweep from a scalar output. Returned map holds one entry per
// requested variable; unreachable ones get zeros. The adjoint graph is
// recorded on `tape`, so any scalar function of the results can be swept
// again for second-order derivatives.
GradMap backward(Tape& tape, const Variable& output, const std::vector<Variable>& wrt);

}  // namespace ssgan
