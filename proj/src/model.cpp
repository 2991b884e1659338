#include "teeg/model.hpp"

#include <cmath>

#include "teeg/common.hpp"
#include "teeg/rng.hpp"

namespace teeg {

namespace {
constexpr double kProbEps = 1e-7;
}

TensorMap init_model_params(const ModelConfig& cfg, uint64_t seed) {
  if (cfg.tok.d_model != cfg.bb.d_model)
    fail("model: tokenizer d_model " + std::to_string(cfg.tok.d_model) +
         " does not match backbone d_model " + std::to_string(cfg.bb.d_model));
  TensorMap p = init_tokenizer_params(cfg.tok, mix64(seed ^ 0x70cULL));
  TensorMap bb = init_backbone_params(cfg.bb, mix64(seed ^ 0xbb0ULL));
  p.insert(bb.begin(), bb.end());
  return p;
}

std::unique_ptr<Graph> build_sequence_graph(const ModelConfig& cfg, int64_t n_segments) {
  if (n_segments < 1) fail("build_sequence_graph: need at least one segment");
  auto g = std::make_unique<Graph>();
  TokenizerNodes tok_nodes = declare_tokenizer_params(*g, cfg.tok);
  BackboneNodes bb_nodes = declare_backbone_params(*g, cfg.bb);
  NodeId h0 = g->input("h0", {1, cfg.bb.d_model});
  NodeId target = g->input("target", {1, 1});

  std::vector<NodeId> token_rows;
  for (int64_t i = 0; i < n_segments; ++i) {
    NodeId seg = g->input("seg." + std::to_string(i), {cfg.tok.channels, cfg.tok.samples});
    token_rows.push_back(build_tokenizer(*g, seg, tok_nodes, cfg.tok));
  }
  NodeId tokens = token_rows.size() == 1 ? token_rows[0] : g->concat_rows(token_rows);

  MagGraphOutputs mag = build_mag(*g, tokens, h0, 0, bb_nodes, cfg.bb);
  const int64_t len = g->shape_of(mag.probs)[0];
  NodeId p_last = g->slice_rows(mag.probs, len - 1, len);
  NodeId p_c = g->clamp(p_last, kProbEps, 1.0 - kProbEps);
  NodeId one_minus_p = g->scalar_add(g->scalar_mul(p_c, -1.0), 1.0);
  NodeId one_minus_y = g->scalar_add(g->scalar_mul(target, -1.0), 1.0);
  NodeId loss = g->scalar_mul(
      g->add(g->mul(target, g->log_(p_c)), g->mul(one_minus_y, g->log_(one_minus_p))), -1.0);

  g->mark_output("probs", mag.probs);
  g->mark_output("p_last", p_last);
  g->mark_output("loss", g->sum_all(loss));
  return g;
}

double bce_loss(double p, int y) {
  const double p_c = std::min(std::max(p, kProbEps), 1.0 - kProbEps);
  return -(y * std::log(p_c) + (1 - y) * std::log(1.0 - p_c));
}

}  // namespace teeg
