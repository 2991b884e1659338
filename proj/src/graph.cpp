#include "teeg/graph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "teeg/common.hpp"

namespace teeg {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap as_mat(const Tensor& t) { return ECMap(t.data.data(), t.rows(), t.cols()); }
EMap as_mat(Tensor& t) { return EMap(t.data.data(), t.rows(), t.cols()); }

double stable_sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParam: return "param";
    case Op::kConst: return "const";
    case Op::kMatMul: return "matmul";
    case Op::kConvBank: return "conv_bank";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kScalarAdd: return "scalar_add";
    case Op::kSquare: return "square";
    case Op::kLog: return "log";
    case Op::kClampMin: return "clamp_min";
    case Op::kClamp: return "clamp";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kAvgPoolRows: return "avgpool_rows";
    case Op::kMeanRows: return "mean_rows";
    case Op::kConcatRows: return "concat_rows";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceRows: return "slice_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kBroadcastRows: return "broadcast_rows";
    case Op::kTranspose: return "transpose";
    case Op::kReshape: return "reshape";
    case Op::kSumAll: return "sum_all";
    case Op::kMeanAll: return "mean_all";
  }
  return "?";
}

void require_2d(const char* op, const std::vector<int64_t>& s) {
  if (s.size() != 2) fail(std::string(op) + ": expected rank-2 tensor, got " + shape_str(s));
}

// im2col for the row-wise filter bank: P(k, c*Tp + t) = x(c, t + k).
void gather_patches(const Tensor& x, int64_t k_len, Tensor& patches) {
  const int64_t c_n = x.rows(), t_n = x.cols(), t_p = t_n - k_len + 1;
  for (int64_t k = 0; k < k_len; ++k) {
    double* dst = patches.data.data() + k * c_n * t_p;
    for (int64_t c = 0; c < c_n; ++c) {
      const double* src = x.data.data() + c * t_n + k;
      std::copy(src, src + t_p, dst + c * t_p);
    }
  }
}

}  // namespace

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<int32_t>(nodes_.size() - 1)};
}

const Node& Graph::node(NodeId id) const {
  if (!id.valid() || id.v >= static_cast<int32_t>(nodes_.size())) fail("graph: invalid node id");
  return nodes_[id.v];
}

NodeId Graph::input(const std::string& name, std::vector<int64_t> shape) {
  if (leaves_.count(name)) fail("graph: duplicate leaf name '" + name + "'");
  numel_of(shape);
  Node n;
  n.op = Op::kInput;
  n.shape = std::move(shape);
  n.name = name;
  NodeId id = push(std::move(n));
  leaves_[name] = id.v;
  return id;
}

NodeId Graph::param(const std::string& name, std::vector<int64_t> shape) {
  if (leaves_.count(name)) fail("graph: duplicate leaf name '" + name + "'");
  numel_of(shape);
  Node n;
  n.op = Op::kParam;
  n.shape = std::move(shape);
  n.name = name;
  n.needs_grad = true;
  NodeId id = push(std::move(n));
  leaves_[name] = id.v;
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.op = Op::kConst;
  n.shape = value.shape;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::unary(Op op, NodeId a, double c0, double c1) {
  const Node& na = node(a);
  Node n;
  n.op = op;
  n.in = {a.v};
  n.shape = na.shape;
  n.c0 = c0;
  n.c1 = c1;
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  require_2d("matmul", na.shape);
  require_2d("matmul", nb.shape);
  if (na.shape[1] != nb.shape[0])
    fail("matmul: inner dimensions mismatch " + shape_str(na.shape) + " x " + shape_str(nb.shape));
  Node n;
  n.op = Op::kMatMul;
  n.in = {a.v, b.v};
  n.shape = {na.shape[0], nb.shape[1]};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Graph::conv_bank(NodeId x, NodeId w, NodeId b) {
  const Node& nx = node(x);
  const Node& nw = node(w);
  const Node& nb = node(b);
  require_2d("conv_bank", nx.shape);
  require_2d("conv_bank", nw.shape);
  require_2d("conv_bank", nb.shape);
  const int64_t k_len = nw.shape[1];
  if (nx.shape[1] < k_len)
    fail("conv_bank: input length " + std::to_string(nx.shape[1]) + " shorter than kernel " +
         std::to_string(k_len));
  if (nb.shape[0] != 1 || nb.shape[1] != nw.shape[0])
    fail("conv_bank: bias shape " + shape_str(nb.shape) + " does not match filter count " +
         std::to_string(nw.shape[0]));
  Node n;
  n.op = Op::kConvBank;
  n.in = {x.v, w.v, b.v};
  n.shape = {nw.shape[0] * nx.shape[0], nx.shape[1] - k_len + 1};
  n.needs_grad = nx.needs_grad || nw.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.shape != nb.shape)
    fail("add: shape mismatch " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  Node n;
  n.op = Op::kAdd;
  n.in = {a.v, b.v};
  n.shape = na.shape;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.shape != nb.shape)
    fail("sub: shape mismatch " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  Node n;
  n.op = Op::kSub;
  n.in = {a.v, b.v};
  n.shape = na.shape;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.shape != nb.shape)
    fail("mul: shape mismatch " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  Node n;
  n.op = Op::kMul;
  n.in = {a.v, b.v};
  n.shape = na.shape;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

NodeId Graph::scalar_mul(NodeId a, double c) { return unary(Op::kScalarMul, a, c); }
NodeId Graph::scalar_add(NodeId a, double c) { return unary(Op::kScalarAdd, a, c); }
NodeId Graph::square(NodeId a) { return unary(Op::kSquare, a); }
NodeId Graph::log_(NodeId a) { return unary(Op::kLog, a); }
NodeId Graph::clamp_min(NodeId a, double lo) { return unary(Op::kClampMin, a, lo); }
NodeId Graph::clamp(NodeId a, double lo, double hi) {
  if (lo >= hi) fail("clamp: lo must be below hi");
  return unary(Op::kClamp, a, lo, hi);
}
NodeId Graph::sigmoid(NodeId a) { return unary(Op::kSigmoid, a); }
NodeId Graph::tanh_(NodeId a) { return unary(Op::kTanh, a); }

NodeId Graph::softmax_rows(NodeId a) {
  require_2d("softmax_rows", node(a).shape);
  return unary(Op::kSoftmaxRows, a);
}

NodeId Graph::avgpool_rows(NodeId a, int64_t window, int64_t stride) {
  const Node& na = node(a);
  require_2d("avgpool_rows", na.shape);
  if (window <= 0 || stride <= 0) fail("avgpool_rows: window and stride must be positive");
  if (na.shape[1] < window)
    fail("avgpool_rows: input length " + std::to_string(na.shape[1]) + " shorter than window " +
         std::to_string(window));
  Node n;
  n.op = Op::kAvgPoolRows;
  n.in = {a.v};
  n.shape = {na.shape[0], (na.shape[1] - window) / stride + 1};
  n.i0 = window;
  n.i1 = stride;
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

NodeId Graph::mean_rows(NodeId a) {
  const Node& na = node(a);
  require_2d("mean_rows", na.shape);
  Node n;
  n.op = Op::kMeanRows;
  n.in = {a.v};
  n.shape = {1, na.shape[1]};
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

NodeId Graph::concat_rows(const std::vector<NodeId>& xs) {
  if (xs.empty()) fail("concat_rows: empty input list");
  int64_t rows = 0;
  const int64_t cols = node(xs[0]).shape.size() == 2 ? node(xs[0]).shape[1] : -1;
  Node n;
  n.op = Op::kConcatRows;
  for (NodeId x : xs) {
    const Node& nx = node(x);
    require_2d("concat_rows", nx.shape);
    if (nx.shape[1] != cols)
      fail("concat_rows: column mismatch " + shape_str(nx.shape) + " vs " +
           std::to_string(cols) + " cols");
    rows += nx.shape[0];
    n.in.push_back(x.v);
    n.needs_grad = n.needs_grad || nx.needs_grad;
  }
  n.shape = {rows, cols};
  return push(std::move(n));
}

NodeId Graph::concat_cols(const std::vector<NodeId>& xs) {
  if (xs.empty()) fail("concat_cols: empty input list");
  int64_t cols = 0;
  const int64_t rows = node(xs[0]).shape.size() == 2 ? node(xs[0]).shape[0] : -1;
  Node n;
  n.op = Op::kConcatCols;
  for (NodeId x : xs) {
    const Node& nx = node(x);
    require_2d("concat_cols", nx.shape);
    if (nx.shape[0] != rows)
      fail("concat_cols: row mismatch " + shape_str(nx.shape) + " vs " + std::to_string(rows) +
           " rows");
    cols += nx.shape[1];
    n.in.push_back(x.v);
    n.needs_grad = n.needs_grad || nx.needs_grad;
  }
  n.shape = {rows, cols};
  return push(std::move(n));
}

NodeId Graph::slice_rows(NodeId a, int64_t r0, int64_t r1) {
  const Node& na = node(a);
  require_2d("slice_rows", na.shape);
  if (r0 < 0 || r1 > na.shape[0] || r0 >= r1)
    fail("slice_rows: bad range [" + std::to_string(r0) + ", " + std::to_string(r1) + ") for " +
         shape_str(na.shape));
  Node n;
  n.op = Op::kSliceRows;
  n.in = {a.v};
  n.shape = {r1 - r0, na.shape[1]};
  n.i0 = r0;
  n.i1 = r1;
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId a, int64_t c0, int64_t c1) {
  const Node& na = node(a);
  require_2d("slice_cols", na.shape);
  if (c0 < 0 || c1 > na.shape[1] || c0 >= c1)
    fail("slice_cols: bad range [" + std::to_string(c0) + ", " + std::to_string(c1) + ") for " +
         shape_str(na.shape));
  Node n;
  n.op = Op::kSliceCols;
  n.in = {a.v};
  n.shape = {na.shape[0], c1 - c0};
  n.i0 = c0;
  n.i1 = c1;
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

NodeId Graph::broadcast_rows(NodeId v, int64_t n_rows) {
  const Node& nv = node(v);
  require_2d("broadcast_rows", nv.shape);
  if (nv.shape[0] != 1) fail("broadcast_rows: expected 1xC input, got " + shape_str(nv.shape));
  if (n_rows <= 0) fail("broadcast_rows: non-positive row count");
  Node n;
  n.op = Op::kBroadcastRows;
  n.in = {v.v};
  n.shape = {n_rows, nv.shape[1]};
  n.needs_grad = nv.needs_grad;
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  const Node& na = node(a);
  require_2d("transpose", na.shape);
  Node n;
  n.op = Op::kTranspose;
  n.in = {a.v};
  n.shape = {na.shape[1], na.shape[0]};
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, std::vector<int64_t> shape) {
  const Node& na = node(a);
  if (numel_of(shape) != numel_of(na.shape))
    fail("reshape: element count mismatch " + shape_str(na.shape) + " -> " + shape_str(shape));
  Node n;
  n.op = Op::kReshape;
  n.in = {a.v};
  n.shape = std::move(shape);
  n.needs_grad = na.needs_grad;
  return push(std::move(n));
}

NodeId Graph::sum_all(NodeId a) {
  Node n;
  n.op = Op::kSumAll;
  n.in = {a.v};
  n.shape = {1, 1};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

NodeId Graph::mean_all(NodeId a) {
  Node n;
  n.op = Op::kMeanAll;
  n.in = {a.v};
  n.shape = {1, 1};
  n.needs_grad = node(a).needs_grad;
  return push(std::move(n));
}

void Graph::mark_output(const std::string& name, NodeId id) {
  node(id);
  outputs_[name] = id.v;
}

std::vector<std::string> Graph::param_names() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : leaves_)
    if (nodes_[id].op == Op::kParam) names.push_back(name);
  return names;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

void Run::forward(const TensorMap& bindings) {
  const auto& nodes = g_->nodes();
  val_.assign(nodes.size(), Tensor());
  grad_.assign(nodes.size(), Tensor());

  for (size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    Tensor& out = val_[i];
    switch (n.op) {
      case Op::kInput:
      case Op::kParam: {
        auto it = bindings.find(n.name);
        if (it == bindings.end()) fail("evaluate: leaf '" + n.name + "' not bound");
        if (it->second.shape != n.shape)
          fail("evaluate: leaf '" + n.name + "' bound with shape " + it->second.shape_str() +
               ", graph expects " + shape_str(n.shape));
        out = it->second;
        break;
      }
      case Op::kConst:
        out = n.value;
        break;
      case Op::kMatMul: {
        const Tensor& a = val_[n.in[0]];
        const Tensor& b = val_[n.in[1]];
        out = Tensor(n.shape);
        as_mat(out).noalias() = as_mat(a) * as_mat(b);
        break;
      }
      case Op::kConvBank: {
        const Tensor& x = val_[n.in[0]];
        const Tensor& w = val_[n.in[1]];
        const Tensor& b = val_[n.in[2]];
        const int64_t k_len = w.cols(), c_n = x.rows(), t_p = x.cols() - k_len + 1;
        Tensor patches({k_len, c_n * t_p});
        gather_patches(x, k_len, patches);
        out = Tensor(n.shape);
        // (F x K) @ (K x C*Tp), rows then reinterpreted as (F*C) x Tp.
        EMap om(out.data.data(), w.rows(), c_n * t_p);
        om.noalias() = as_mat(w) * as_mat(patches);
        for (int64_t f = 0; f < w.rows(); ++f) {
          double* row = out.data.data() + f * c_n * t_p;
          const double bf = b.data[f];
          for (int64_t j = 0; j < c_n * t_p; ++j) row[j] += bf;
        }
        break;
      }
      case Op::kAdd: {
        const Tensor& a = val_[n.in[0]];
        const Tensor& b = val_[n.in[1]];
        out = Tensor(n.shape);
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] = a.data[j] + b.data[j];
        break;
      }
      case Op::kSub: {
        const Tensor& a = val_[n.in[0]];
        const Tensor& b = val_[n.in[1]];
        out = Tensor(n.shape);
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] = a.data[j] - b.data[j];
        break;
      }
      case Op::kMul: {
        const Tensor& a = val_[n.in[0]];
        const Tensor& b = val_[n.in[1]];
        out = Tensor(n.shape);
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] = a.data[j] * b.data[j];
        break;
      }
      case Op::kScalarMul: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] = a.data[j] * n.c0;
        break;
      }
      case Op::kScalarAdd: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] = a.data[j] + n.c0;
        break;
      }
      case Op::kSquare: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] = a.data[j] * a.data[j];
        break;
      }
      case Op::kLog: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        for (size_t j = 0; j < out.data.size(); ++j) {
          if (a.data[j] <= 0.0)
            fail("log: non-positive value " + std::to_string(a.data[j]) +
                 " at flat index " + std::to_string(j) + " (caller must clamp)");
          out.data[j] = std::log(a.data[j]);
        }
        break;
      }
      case Op::kClampMin: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] = std::max(a.data[j], n.c0);
        break;
      }
      case Op::kClamp: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        for (size_t j = 0; j < out.data.size(); ++j)
          out.data[j] = std::min(std::max(a.data[j], n.c0), n.c1);
        break;
      }
      case Op::kSigmoid: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] = stable_sigmoid(a.data[j]);
        break;
      }
      case Op::kTanh: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] = std::tanh(a.data[j]);
        break;
      }
      case Op::kSoftmaxRows: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        const int64_t r_n = a.rows(), c_n = a.cols();
        for (int64_t r = 0; r < r_n; ++r) {
          const double* src = a.data.data() + r * c_n;
          double* dst = out.data.data() + r * c_n;
          double mx = src[0];
          for (int64_t c = 1; c < c_n; ++c) mx = std::max(mx, src[c]);
          double sum = 0;
          for (int64_t c = 0; c < c_n; ++c) {
            dst[c] = std::exp(src[c] - mx);
            sum += dst[c];
          }
          for (int64_t c = 0; c < c_n; ++c) dst[c] /= sum;
        }
        break;
      }
      case Op::kAvgPoolRows: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        const int64_t w = n.i0, s = n.i1, l_n = n.shape[1];
        const double inv = 1.0 / static_cast<double>(w);
        for (int64_t r = 0; r < a.rows(); ++r) {
          const double* src = a.data.data() + r * a.cols();
          double* dst = out.data.data() + r * l_n;
          for (int64_t l = 0; l < l_n; ++l) {
            double sum = 0;
            const double* p = src + l * s;
            for (int64_t k = 0; k < w; ++k) sum += p[k];
            dst[l] = sum * inv;
          }
        }
        break;
      }
      case Op::kMeanRows: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        const double inv = 1.0 / static_cast<double>(a.rows());
        for (int64_t r = 0; r < a.rows(); ++r)
          for (int64_t c = 0; c < a.cols(); ++c) out.data[c] += a.at(r, c);
        for (double& x : out.data) x *= inv;
        break;
      }
      case Op::kConcatRows: {
        out = Tensor(n.shape);
        int64_t r_off = 0;
        for (int32_t src_id : n.in) {
          const Tensor& a = val_[src_id];
          std::copy(a.data.begin(), a.data.end(), out.data.begin() + r_off * n.shape[1]);
          r_off += a.rows();
        }
        break;
      }
      case Op::kConcatCols: {
        out = Tensor(n.shape);
        int64_t c_off = 0;
        for (int32_t src_id : n.in) {
          const Tensor& a = val_[src_id];
          for (int64_t r = 0; r < a.rows(); ++r)
            std::copy(a.data.begin() + r * a.cols(), a.data.begin() + (r + 1) * a.cols(),
                      out.data.begin() + r * n.shape[1] + c_off);
          c_off += a.cols();
        }
        break;
      }
      case Op::kSliceRows: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        std::copy(a.data.begin() + n.i0 * a.cols(), a.data.begin() + n.i1 * a.cols(),
                  out.data.begin());
        break;
      }
      case Op::kSliceCols: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        for (int64_t r = 0; r < a.rows(); ++r)
          std::copy(a.data.begin() + r * a.cols() + n.i0, a.data.begin() + r * a.cols() + n.i1,
                    out.data.begin() + r * n.shape[1]);
        break;
      }
      case Op::kBroadcastRows: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        for (int64_t r = 0; r < n.shape[0]; ++r)
          std::copy(a.data.begin(), a.data.end(), out.data.begin() + r * n.shape[1]);
        break;
      }
      case Op::kTranspose: {
        const Tensor& a = val_[n.in[0]];
        out = Tensor(n.shape);
        as_mat(out) = as_mat(a).transpose();
        break;
      }
      case Op::kReshape: {
        const Tensor& a = val_[n.in[0]];
        out.shape = n.shape;
        out.data = a.data;
        break;
      }
      case Op::kSumAll: {
        const Tensor& a = val_[n.in[0]];
        double sum = 0;
        for (double x : a.data) sum += x;
        out = Tensor::scalar(sum);
        break;
      }
      case Op::kMeanAll: {
        const Tensor& a = val_[n.in[0]];
        double sum = 0;
        for (double x : a.data) sum += x;
        out = Tensor::scalar(sum / static_cast<double>(a.numel()));
        break;
      }
    }
  }
  forward_done_ = true;
}

TensorMap Run::outputs() const {
  if (!forward_done_) fail("outputs: forward has not been run");
  TensorMap m;
  for (const auto& [name, id] : g_->outputs()) m[name] = val_[id];
  return m;
}

const Tensor& Run::value(const std::string& output) const {
  if (!forward_done_) fail("value: forward has not been run");
  auto it = g_->outputs().find(output);
  if (it == g_->outputs().end()) fail("value: unknown output '" + output + "'");
  return val_[it->second];
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

TensorMap Run::backward(const std::string& output, const Tensor& seed) {
  if (!forward_done_) fail("backward: called before evaluate");
  auto out_it = g_->outputs().find(output);
  if (out_it == g_->outputs().end()) fail("backward: unknown output '" + output + "'");
  const int32_t out_id = out_it->second;
  const auto& nodes = g_->nodes();
  if (seed.shape != nodes[out_id].shape)
    fail("backward: seed shape " + shape_str(seed.shape) + " does not match output " +
         shape_str(nodes[out_id].shape));

  grad_.assign(nodes.size(), Tensor());
  grad_[out_id] = seed;

  TensorMap param_grads;
  // Every param gets a gradient; unused parameters keep zeros.
  for (const auto& [name, id] : g_->leaves())
    if (nodes[id].op == Op::kParam) param_grads[name] = Tensor::zeros(nodes[id].shape);

  auto acc = [&](int32_t id, int64_t flat, double v) { grad_[id].data[flat] += v; };
  auto ensure = [&](int32_t id) {
    if (!nodes[id].needs_grad) return false;
    if (grad_[id].data.empty()) grad_[id] = Tensor::zeros(nodes[id].shape);
    return true;
  };

  for (int32_t i = out_id; i >= 0; --i) {
    const Node& n = nodes[i];
    if (!n.needs_grad || grad_[i].data.empty()) continue;
    Tensor& g = grad_[i];
    switch (n.op) {
      case Op::kInput:
      case Op::kConst:
        break;
      case Op::kParam:
        param_grads[n.name] = g;
        break;
      case Op::kMatMul: {
        const Tensor& a = val_[n.in[0]];
        const Tensor& b = val_[n.in[1]];
        if (ensure(n.in[0])) as_mat(grad_[n.in[0]]).noalias() += as_mat(g) * as_mat(b).transpose();
        if (ensure(n.in[1])) as_mat(grad_[n.in[1]]).noalias() += as_mat(a).transpose() * as_mat(g);
        break;
      }
      case Op::kConvBank: {
        const Tensor& x = val_[n.in[0]];
        const Tensor& w = val_[n.in[1]];
        const int64_t k_len = w.cols(), c_n = x.rows(), t_p = x.cols() - k_len + 1;
        ECMap gm(g.data.data(), w.rows(), c_n * t_p);
        if (ensure(n.in[1])) {
          Tensor patches({k_len, c_n * t_p});
          gather_patches(x, k_len, patches);
          as_mat(grad_[n.in[1]]).noalias() += gm * as_mat(patches).transpose();
        }
        if (ensure(n.in[2])) {
          Tensor& gb = grad_[n.in[2]];
          for (int64_t f = 0; f < w.rows(); ++f) {
            double sum = 0;
            const double* row = g.data.data() + f * c_n * t_p;
            for (int64_t j = 0; j < c_n * t_p; ++j) sum += row[j];
            gb.data[f] += sum;
          }
        }
        if (ensure(n.in[0])) {
          Tensor dpatches({k_len, c_n * t_p});
          as_mat(dpatches).noalias() = as_mat(w).transpose() * gm;
          Tensor& gx = grad_[n.in[0]];
          for (int64_t k = 0; k < k_len; ++k) {
            const double* src = dpatches.data.data() + k * c_n * t_p;
            for (int64_t c = 0; c < c_n; ++c) {
              double* dst = gx.data.data() + c * x.cols() + k;
              for (int64_t t = 0; t < t_p; ++t) dst[t] += src[c * t_p + t];
            }
          }
        }
        break;
      }
      case Op::kAdd: {
        for (int s = 0; s < 2; ++s)
          if (ensure(n.in[s]))
            for (size_t j = 0; j < g.data.size(); ++j) acc(n.in[s], j, g.data[j]);
        break;
      }
      case Op::kSub: {
        if (ensure(n.in[0]))
          for (size_t j = 0; j < g.data.size(); ++j) acc(n.in[0], j, g.data[j]);
        if (ensure(n.in[1]))
          for (size_t j = 0; j < g.data.size(); ++j) acc(n.in[1], j, -g.data[j]);
        break;
      }
      case Op::kMul: {
        const Tensor& a = val_[n.in[0]];
        const Tensor& b = val_[n.in[1]];
        if (ensure(n.in[0]))
          for (size_t j = 0; j < g.data.size(); ++j) acc(n.in[0], j, g.data[j] * b.data[j]);
        if (ensure(n.in[1]))
          for (size_t j = 0; j < g.data.size(); ++j) acc(n.in[1], j, g.data[j] * a.data[j]);
        break;
      }
      case Op::kScalarMul: {
        if (ensure(n.in[0]))
          for (size_t j = 0; j < g.data.size(); ++j) acc(n.in[0], j, g.data[j] * n.c0);
        break;
      }
      case Op::kScalarAdd: {
        if (ensure(n.in[0]))
          for (size_t j = 0; j < g.data.size(); ++j) acc(n.in[0], j, g.data[j]);
        break;
      }
      case Op::kSquare: {
        const Tensor& a = val_[n.in[0]];
        if (ensure(n.in[0]))
          for (size_t j = 0; j < g.data.size(); ++j) acc(n.in[0], j, 2.0 * a.data[j] * g.data[j]);
        break;
      }
      case Op::kLog: {
        const Tensor& a = val_[n.in[0]];
        if (ensure(n.in[0]))
          for (size_t j = 0; j < g.data.size(); ++j) acc(n.in[0], j, g.data[j] / a.data[j]);
        break;
      }
      case Op::kClampMin: {
        const Tensor& a = val_[n.in[0]];
        if (ensure(n.in[0]))
          for (size_t j = 0; j < g.data.size(); ++j)
            if (a.data[j] > n.c0) acc(n.in[0], j, g.data[j]);
        break;
      }
      case Op::kClamp: {
        const Tensor& a = val_[n.in[0]];
        if (ensure(n.in[0]))
          for (size_t j = 0; j < g.data.size(); ++j)
            if (a.data[j] > n.c0 && a.data[j] < n.c1) acc(n.in[0], j, g.data[j]);
        break;
      }
      case Op::kSigmoid: {
        const Tensor& y = val_[i];
        if (ensure(n.in[0]))
          for (size_t j = 0; j < g.data.size(); ++j)
            acc(n.in[0], j, g.data[j] * y.data[j] * (1.0 - y.data[j]));
        break;
      }
      case Op::kTanh: {
        const Tensor& y = val_[i];
        if (ensure(n.in[0]))
          for (size_t j = 0; j < g.data.size(); ++j)
            acc(n.in[0], j, g.data[j] * (1.0 - y.data[j] * y.data[j]));
        break;
      }
      case Op::kSoftmaxRows: {
        const Tensor& y = val_[i];
        if (ensure(n.in[0])) {
          const int64_t r_n = y.rows(), c_n = y.cols();
          Tensor& gx = grad_[n.in[0]];
          for (int64_t r = 0; r < r_n; ++r) {
            const double* yr = y.data.data() + r * c_n;
            const double* gr = g.data.data() + r * c_n;
            double dot = 0;
            for (int64_t c = 0; c < c_n; ++c) dot += yr[c] * gr[c];
            double* dst = gx.data.data() + r * c_n;
            for (int64_t c = 0; c < c_n; ++c) dst[c] += yr[c] * (gr[c] - dot);
          }
        }
        break;
      }
      case Op::kAvgPoolRows: {
        if (ensure(n.in[0])) {
          const Tensor& a = val_[n.in[0]];
          Tensor& gx = grad_[n.in[0]];
          const int64_t w = n.i0, s = n.i1, l_n = n.shape[1];
          const double inv = 1.0 / static_cast<double>(w);
          for (int64_t r = 0; r < a.rows(); ++r) {
            double* dst = gx.data.data() + r * a.cols();
            const double* gr = g.data.data() + r * l_n;
            for (int64_t l = 0; l < l_n; ++l) {
              const double gv = gr[l] * inv;
              double* p = dst + l * s;
              for (int64_t k = 0; k < w; ++k) p[k] += gv;
            }
          }
        }
        break;
      }
      case Op::kMeanRows: {
        if (ensure(n.in[0])) {
          const Tensor& a = val_[n.in[0]];
          Tensor& gx = grad_[n.in[0]];
          const double inv = 1.0 / static_cast<double>(a.rows());
          for (int64_t r = 0; r < a.rows(); ++r)
            for (int64_t c = 0; c < a.cols(); ++c) gx.at(r, c) += g.data[c] * inv;
        }
        break;
      }
      case Op::kConcatRows: {
        int64_t r_off = 0;
        for (int32_t src_id : n.in) {
          const int64_t r_n = nodes[src_id].shape[0];
          if (ensure(src_id)) {
            Tensor& gx = grad_[src_id];
            const double* src = g.data.data() + r_off * n.shape[1];
            for (size_t j = 0; j < gx.data.size(); ++j) gx.data[j] += src[j];
          }
          r_off += r_n;
        }
        break;
      }
      case Op::kConcatCols: {
        int64_t c_off = 0;
        for (int32_t src_id : n.in) {
          const int64_t c_n = nodes[src_id].shape[1];
          if (ensure(src_id)) {
            Tensor& gx = grad_[src_id];
            for (int64_t r = 0; r < gx.rows(); ++r)
              for (int64_t c = 0; c < c_n; ++c) gx.at(r, c) += g.at(r, c_off + c);
          }
          c_off += c_n;
        }
        break;
      }
      case Op::kSliceRows: {
        if (ensure(n.in[0])) {
          Tensor& gx = grad_[n.in[0]];
          double* dst = gx.data.data() + n.i0 * gx.cols();
          for (size_t j = 0; j < g.data.size(); ++j) dst[j] += g.data[j];
        }
        break;
      }
      case Op::kSliceCols: {
        if (ensure(n.in[0])) {
          Tensor& gx = grad_[n.in[0]];
          for (int64_t r = 0; r < g.rows(); ++r)
            for (int64_t c = 0; c < g.cols(); ++c) gx.at(r, n.i0 + c) += g.at(r, c);
        }
        break;
      }
      case Op::kBroadcastRows: {
        if (ensure(n.in[0])) {
          Tensor& gx = grad_[n.in[0]];
          for (int64_t r = 0; r < g.rows(); ++r)
            for (int64_t c = 0; c < g.cols(); ++c) gx.data[c] += g.at(r, c);
        }
        break;
      }
      case Op::kTranspose: {
        if (ensure(n.in[0])) as_mat(grad_[n.in[0]]) += as_mat(g).transpose();
        break;
      }
      case Op::kReshape: {
        if (ensure(n.in[0]))
          for (size_t j = 0; j < g.data.size(); ++j) acc(n.in[0], j, g.data[j]);
        break;
      }
      case Op::kSumAll: {
        if (ensure(n.in[0])) {
          Tensor& gx = grad_[n.in[0]];
          for (double& x : gx.data) x += g.data[0];
        }
        break;
      }
      case Op::kMeanAll: {
        if (ensure(n.in[0])) {
          Tensor& gx = grad_[n.in[0]];
          const double gv = g.data[0] / static_cast<double>(gx.numel());
          for (double& x : gx.data) x += gv;
        }
        break;
      }
    }
    // Adjoint of node i is final here, and any consumer of i has already
    // been processed, so both the adjoint and the cached value are dead.
    if (n.op != Op::kParam) grad_[i] = Tensor();
    bool is_output = false;
    for (const auto& [oname, oid] : g_->outputs()) is_output = is_output || oid == i;
    if (!is_output && n.op != Op::kInput && n.op != Op::kParam && n.op != Op::kConst)
      val_[i] = Tensor();
  }
  forward_done_ = false;
  return param_grads;
}

TensorMap evaluate(const Graph& g, const TensorMap& bindings) {
  Run run(g);
  run.forward(bindings);
  return run.outputs();
}

double gradcheck(const Graph& g, const TensorMap& point, const std::string& scalar_output,
                 double epsilon) {
  if (epsilon < 1e-7 || epsilon > 1e-3) fail("gradcheck: epsilon outside [1e-7, 1e-3]");
  auto out_it = g.outputs().find(scalar_output);
  if (out_it == g.outputs().end()) fail("gradcheck: unknown output '" + scalar_output + "'");
  if (numel_of(g.nodes()[out_it->second].shape) != 1)
    fail("gradcheck: output '" + scalar_output + "' is not scalar");

  Run run(g);
  run.forward(point);
  Tensor seed = Tensor::full(g.nodes()[out_it->second].shape, 1.0);
  TensorMap analytic = run.backward(scalar_output, seed);

  double max_err = 0;
  TensorMap probe = point;
  for (const std::string& pname : g.param_names()) {
    Tensor& pt = probe[pname];
    for (size_t j = 0; j < pt.data.size(); ++j) {
      const double saved = pt.data[j];
      pt.data[j] = saved + epsilon;
      const double fp = evaluate(g, probe).at(scalar_output).data[0];
      pt.data[j] = saved - epsilon;
      const double fm = evaluate(g, probe).at(scalar_output).data[0];
      pt.data[j] = saved;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = analytic.at(pname).data[j];
      max_err = std::max(max_err, std::fabs(a - numeric) / std::max(1.0, std::fabs(numeric)));
    }
  }
  return max_err;
}

}  // namespace teeg
