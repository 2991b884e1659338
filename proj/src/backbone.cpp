#include "teeg/backbone.hpp"

#include <cmath>

#include "teeg/common.hpp"
#include "teeg/rng.hpp"

namespace teeg {

namespace {
constexpr double kMaskedOut = -1e30;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

MagMode mag_mode_from_string(const std::string& s) {
  if (s == "full") return MagMode::kFull;
  if (s == "attention_only") return MagMode::kAttentionOnly;
  if (s == "memory_only") return MagMode::kMemoryOnly;
  fail("unknown ablation mode '" + s + "' (full|attention_only|memory_only)");
}

std::string mag_mode_to_string(MagMode m) {
  switch (m) {
    case MagMode::kFull: return "full";
    case MagMode::kAttentionOnly: return "attention_only";
    case MagMode::kMemoryOnly: return "memory_only";
  }
  return "?";
}

BackboneNodes declare_backbone_params(Graph& g, const BackboneConfig& cfg) {
  const int64_t d = cfg.d_model, hk = cfg.n_heads * cfg.d_k;
  BackboneNodes n;
  n.w_q = g.param("bb.w_q", {d, hk});
  n.w_k = g.param("bb.w_k", {d, hk});
  n.w_v = g.param("bb.w_v", {d, hk});
  n.w_o = g.param("bb.w_o", {hk, d});
  n.theta = g.param("bb.theta", {1, d});
  n.w_kx = g.param("bb.w_kx", {d, d});
  n.b_kx = g.param("bb.b_kx", {1, d});
  n.w_mem = g.param("bb.w_mem", {d, d});
  n.b_mem = g.param("bb.b_mem", {1, d});
  n.w_g = g.param("bb.w_g", {2 * d, d});
  n.b_g = g.param("bb.b_g", {1, d});
  n.w_cls = g.param("bb.w_cls", {d, 1});
  n.b_cls = g.param("bb.b_cls", {1, 1});
  return n;
}

namespace {

// Additive mask: position i may attend to j in [max(0, i-S+1), i].
Tensor window_mask(int64_t len, int64_t window) {
  Tensor m({len, len});
  for (int64_t i = 0; i < len; ++i)
    for (int64_t j = 0; j < len; ++j)
      m.at(i, j) = (j <= i && j >= i - window + 1) ? 0.0 : kMaskedOut;
  return m;
}

}  // namespace

MagGraphOutputs build_mag(Graph& g, NodeId tokens, NodeId h0, int64_t tail_len,
                          const BackboneNodes& nodes, const BackboneConfig& cfg) {
  const auto& shape = g.shape_of(tokens);
  if (shape.size() != 2 || shape[1] != cfg.d_model)
    fail("build_mag: tokens shape " + shape_str(shape) + " does not match d_model " +
         std::to_string(cfg.d_model));
  const int64_t len = shape[0];
  const int64_t out_len = len - tail_len;
  if (tail_len < 0 || out_len < 1) fail("build_mag: bad tail length");
  if (cfg.window < 1) fail("build_mag: window must be at least 1");

  NodeId z_attn_out, z_mem, h_last;
  const bool use_attn = cfg.mode != MagMode::kMemoryOnly;
  const bool use_mem = cfg.mode != MagMode::kAttentionOnly;

  if (use_attn) {
    NodeId q_all = g.matmul(tokens, nodes.w_q);
    NodeId k_all = g.matmul(tokens, nodes.w_k);
    NodeId v_all = g.matmul(tokens, nodes.w_v);
    NodeId mask = g.constant(window_mask(len, cfg.window));
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.d_k));
    std::vector<NodeId> heads;
    for (int64_t h = 0; h < cfg.n_heads; ++h) {
      const int64_t c0 = h * cfg.d_k, c1 = (h + 1) * cfg.d_k;
      NodeId qh = g.slice_cols(q_all, c0, c1);
      NodeId kh = g.slice_cols(k_all, c0, c1);
      NodeId vh = g.slice_cols(v_all, c0, c1);
      NodeId scores = g.add(g.scalar_mul(g.matmul(qh, g.transpose(kh)), inv_sqrt_dk), mask);
      heads.push_back(g.matmul(g.softmax_rows(scores), vh));
    }
    NodeId concat = cfg.n_heads == 1 ? heads[0] : g.concat_cols(heads);
    NodeId z_attn = g.matmul(concat, nodes.w_o);
    z_attn_out = tail_len > 0 ? g.slice_rows(z_attn, tail_len, len) : z_attn;
  }

  if (use_mem) {
    NodeId retain = g.sigmoid(nodes.theta);
    NodeId write_share = g.scalar_add(g.scalar_mul(retain, -1.0), 1.0);
    NodeId h_prev = h0;
    std::vector<NodeId> h_rows;
    for (int64_t t = tail_len; t < len; ++t) {
      NodeId x_t = g.slice_rows(tokens, t, t + 1);
      NodeId write = g.tanh_(g.add(g.matmul(x_t, nodes.w_kx), nodes.b_kx));
      h_prev = g.add(g.mul(retain, h_prev), g.mul(write_share, write));
      h_rows.push_back(h_prev);
    }
    NodeId h_all = h_rows.size() == 1 ? h_rows[0] : g.concat_rows(h_rows);
    z_mem = g.add(g.matmul(h_all, nodes.w_mem), g.broadcast_rows(nodes.b_mem, out_len));
    h_last = h_prev;
  } else {
    h_last = h0;
  }

  NodeId fused;
  switch (cfg.mode) {
    case MagMode::kFull: {
      NodeId gate_in = g.concat_cols({z_attn_out, z_mem});
      NodeId gate =
          g.sigmoid(g.add(g.matmul(gate_in, nodes.w_g), g.broadcast_rows(nodes.b_g, out_len)));
      NodeId anti_gate = g.scalar_add(g.scalar_mul(gate, -1.0), 1.0);
      fused = g.add(g.mul(gate, z_attn_out), g.mul(anti_gate, z_mem));
      break;
    }
    case MagMode::kAttentionOnly:
      fused = z_attn_out;
      break;
    case MagMode::kMemoryOnly:
      fused = z_mem;
      break;
  }

  MagGraphOutputs out;
  out.outputs = fused;
  out.probs = g.sigmoid(g.add(g.matmul(fused, nodes.w_cls), g.broadcast_rows(nodes.b_cls, out_len)));
  out.h_last = h_last;
  return out;
}

TensorMap init_backbone_params(const BackboneConfig& cfg, uint64_t seed) {
  const int64_t d = cfg.d_model, hk = cfg.n_heads * cfg.d_k;
  CounterRng root(seed);
  auto fill = [&](Tensor& t, uint64_t salt, double scale) {
    CounterRng s = root.stream(salt);
    for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = scale * s.normal(i);
  };
  TensorMap p;
  const double is_d = 1.0 / std::sqrt(static_cast<double>(d));
  p["bb.w_q"] = Tensor({d, hk});
  fill(p["bb.w_q"], 0xb001, is_d);
  p["bb.w_k"] = Tensor({d, hk});
  fill(p["bb.w_k"], 0xb002, is_d);
  p["bb.w_v"] = Tensor({d, hk});
  fill(p["bb.w_v"], 0xb003, is_d);
  p["bb.w_o"] = Tensor({hk, d});
  fill(p["bb.w_o"], 0xb004, 1.0 / std::sqrt(static_cast<double>(hk)));
  // Retention starts at sigmoid(theta) = 0.9: slow decay.
  p["bb.theta"] = Tensor::full({1, d}, std::log(0.9 / 0.1));
  p["bb.w_kx"] = Tensor({d, d});
  fill(p["bb.w_kx"], 0xb005, is_d);
  p["bb.b_kx"] = Tensor({1, d});
  p["bb.w_mem"] = Tensor({d, d});
  fill(p["bb.w_mem"], 0xb006, is_d);
  p["bb.b_mem"] = Tensor({1, d});
  p["bb.w_g"] = Tensor({2 * d, d});
  fill(p["bb.w_g"], 0xb007, 1.0 / std::sqrt(static_cast<double>(2 * d)));
  p["bb.b_g"] = Tensor({1, d});  // gate starts balanced at 0.5
  p["bb.w_cls"] = Tensor({d, 1});
  fill(p["bb.w_cls"], 0xb008, is_d);
  p["bb.b_cls"] = Tensor({1, 1});
  return p;
}

MemoryState make_memory_state(const BackboneConfig& cfg) {
  MemoryState s;
  s.h = Tensor({1, cfg.d_model});
  return s;
}

MagResult mag_forward(const Tensor& tokens, MemoryState& state, const TensorMap& params,
                      const BackboneConfig& cfg) {
  if (tokens.rank() != 2 || tokens.cols() != cfg.d_model)
    fail("mag_forward: tokens shape " + tokens.shape_str() + " does not match d_model");
  if (state.h.shape != std::vector<int64_t>{1, cfg.d_model})
    fail("mag_forward: memory state dimension mismatch");
  const bool carry_tail = cfg.mode != MagMode::kMemoryOnly;
  const int64_t expect_tail =
      carry_tail ? std::min<int64_t>(cfg.window - 1, state.step) : 0;
  const int64_t tail_len = state.tail.data.empty() ? 0 : state.tail.rows();
  if (tail_len != expect_tail)
    fail("mag_forward: stale memory state (carried " + std::to_string(tail_len) +
         " tail rows at step " + std::to_string(state.step) + ", expected " +
         std::to_string(expect_tail) + ")");

  const int64_t chunk = tokens.rows();
  const int64_t total = tail_len + chunk;
  Tensor bound({total, cfg.d_model});
  if (tail_len > 0)
    std::copy(state.tail.data.begin(), state.tail.data.end(), bound.data.begin());
  std::copy(tokens.data.begin(), tokens.data.end(),
            bound.data.begin() + tail_len * cfg.d_model);

  Graph g;
  BackboneNodes nodes = declare_backbone_params(g, cfg);
  NodeId tok_in = g.input("tokens", {total, cfg.d_model});
  NodeId h0 = g.input("h0", {1, cfg.d_model});
  MagGraphOutputs mag = build_mag(g, tok_in, h0, tail_len, nodes, cfg);
  g.mark_output("outputs", mag.outputs);
  g.mark_output("probs", mag.probs);
  g.mark_output("h_last", mag.h_last);

  TensorMap bindings;
  for (const auto& [name, t] : params)
    if (name.rfind("bb.", 0) == 0) bindings[name] = t;
  bindings["tokens"] = bound;
  bindings["h0"] = state.h;
  Run run(g);
  run.forward(bindings);

  MagResult res;
  res.outputs = run.value("outputs");
  res.probs.assign(run.value("probs").data.begin(), run.value("probs").data.end());
  state.h = run.value("h_last");
  state.step += chunk;
  if (carry_tail) {
    const int64_t keep = std::min<int64_t>(cfg.window - 1, state.step);
    if (keep > 0) {
      Tensor tail({keep, cfg.d_model});
      std::copy(bound.data.end() - keep * cfg.d_model, bound.data.end(), tail.data.begin());
      state.tail = std::move(tail);
    }
  }
  return res;
}

Tensor memory_update(const Tensor& h_prev, const Tensor& write, const Tensor& theta) {
  if (!h_prev.same_shape(write) || !h_prev.same_shape(theta))
    fail("memory_update: shape mismatch " + h_prev.shape_str() + " / " + write.shape_str() +
         " / " + theta.shape_str());
  Tensor h(h_prev.shape);
  for (size_t i = 0; i < h.data.size(); ++i) {
    const double retain = sigmoid(theta.data[i]);
    h.data[i] = retain * h_prev.data[i] + (1.0 - retain) * write.data[i];
  }
  return h;
}

Tensor memory_write(const Tensor& x, const Tensor& w_kx, const Tensor& b_kx) {
  if (x.rank() != 2 || w_kx.rank() != 2 || x.cols() != w_kx.rows())
    fail("memory_write: shape mismatch");
  Tensor out({x.rows(), w_kx.cols()});
  for (int64_t r = 0; r < x.rows(); ++r)
    for (int64_t c = 0; c < w_kx.cols(); ++c) {
      double acc = b_kx.data[c];
      for (int64_t k = 0; k < x.cols(); ++k) acc += x.at(r, k) * w_kx.at(k, c);
      out.at(r, c) = std::tanh(acc);
    }
  return out;
}

}  // namespace teeg
