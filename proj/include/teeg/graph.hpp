#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "teeg/tensor.hpp"

namespace teeg {

// Primitive ops of the compute graph. All shapes are inferred and checked
// when a node is added, so shape errors surface at build time with the op
// name and the offending dimensions.
enum class Op : uint8_t {
  kInput,
  kParam,
  kConst,
  kMatMul,
  kConvBank,  // x:CxT, w:FxK, b:1xF -> (F*C)x(T-K+1), valid 1-D conv per row
  kAdd,
  kSub,
  kMul,
  kScalarMul,
  kScalarAdd,
  kSquare,
  kLog,  // errors on non-positive input; pair with clamp_min for guarded log
  kClampMin,
  kClamp,
  kSigmoid,
  kTanh,
  kSoftmaxRows,
  kAvgPoolRows,  // window/stride pooling over the last axis
  kMeanRows,     // RxC -> 1xC
  kConcatRows,
  kConcatCols,
  kSliceRows,
  kSliceCols,
  kBroadcastRows,  // 1xC -> NxC
  kTranspose,
  kReshape,
  kSumAll,
  kMeanAll,
};

struct NodeId {
  int32_t v = -1;
  bool valid() const { return v >= 0; }
};

struct Node {
  Op op;
  std::vector<int32_t> in;
  std::vector<int64_t> shape;
  int64_t i0 = 0, i1 = 0;  // integer attributes (window/stride, slice bounds)
  double c0 = 0, c1 = 0;   // scalar attributes
  std::string name;        // inputs and params
  Tensor value;            // constants
  bool needs_grad = false;
};

// Static acyclic graph; nodes evaluate in insertion order, which is a
// topological order by construction. Deterministic and reusable: build
// once per shape, evaluate many times with different bindings.
class Graph {
 public:
  NodeId input(const std::string& name, std::vector<int64_t> shape);
  NodeId param(const std::string& name, std::vector<int64_t> shape);
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId conv_bank(NodeId x, NodeId w, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scalar_mul(NodeId a, double c);
  NodeId scalar_add(NodeId a, double c);
  NodeId square(NodeId a);
  NodeId log_(NodeId a);
  NodeId clamp_min(NodeId a, double lo);
  NodeId clamp(NodeId a, double lo, double hi);
  NodeId sigmoid(NodeId a);
  NodeId tanh_(NodeId a);
  NodeId softmax_rows(NodeId a);
  NodeId avgpool_rows(NodeId a, int64_t window, int64_t stride);
  NodeId mean_rows(NodeId a);
  NodeId concat_rows(const std::vector<NodeId>& xs);
  NodeId concat_cols(const std::vector<NodeId>& xs);
  NodeId slice_rows(NodeId a, int64_t r0, int64_t r1);
  NodeId slice_cols(NodeId a, int64_t c0, int64_t c1);
  NodeId broadcast_rows(NodeId v, int64_t n);
  NodeId transpose(NodeId a);
  NodeId reshape(NodeId a, std::vector<int64_t> shape);
  NodeId sum_all(NodeId a);
  NodeId mean_all(NodeId a);

  void mark_output(const std::string& name, NodeId id);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<int64_t>& shape_of(NodeId id) const { return nodes_[id.v].shape; }
  const std::map<std::string, int32_t>& leaves() const { return leaves_; }
  const std::map<std::string, int32_t>& outputs() const { return outputs_; }
  std::vector<std::string> param_names() const;

 private:
  NodeId push(Node n);
  const Node& node(NodeId id) const;
  NodeId unary(Op op, NodeId a, double c0 = 0, double c1 = 0);

  std::vector<Node> nodes_;
  std::map<std::string, int32_t> leaves_;
  std::map<std::string, int32_t> outputs_;
};

// One evaluation of a graph: forward caches intermediates, backward
// consumes them (freeing values and adjoints as soon as they are dead, so
// peak memory stays near the forward footprint). Bindings must cover every
// input and param leaf. A Run is single-threaded; run independent Run
// instances on different threads for batch parallelism.
class Run {
 public:
  explicit Run(const Graph& g) : g_(&g) {}

  void forward(const TensorMap& bindings);
  // All marked outputs.
  TensorMap outputs() const;
  const Tensor& value(const std::string& output) const;

  // Reverse pass from the named output, seeded with `seed` (same shape as
  // the output). Returns gradients for every param in the graph; params the
  // output does not depend on get zero gradients.
  TensorMap backward(const std::string& output, const Tensor& seed);

 private:
  const Graph* g_;
  std::vector<Tensor> val_;
  std::vector<Tensor> grad_;
  bool forward_done_ = false;
};

// evaluate/backward convenience wrappers matching the functional interface.
TensorMap evaluate(const Graph& g, const TensorMap& bindings);

// Central-difference gradient check of a scalar output against the reverse
// pass. Returns max over parameter elements of |analytic - numeric| /
// max(1, |numeric|).
double gradcheck(const Graph& g, const TensorMap& point, const std::string& scalar_output,
                 double epsilon);

}  // namespace teeg
