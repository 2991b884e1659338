#include "teeg/tokenizer.hpp"

#include <cmath>

#include "teeg/common.hpp"
#include "teeg/rng.hpp"

namespace teeg {

int64_t token_count(int64_t t_samples, int64_t k_temp, int64_t pool_window, int64_t pool_stride) {
  if (k_temp <= 0 || pool_window <= 0 || pool_stride <= 0)
    fail("token_count: non-positive kernel, window, or stride");
  if (t_samples < k_temp + pool_window)
    fail("token_count: input of " + std::to_string(t_samples) +
         " samples is shorter than kernel + pool window = " +
         std::to_string(k_temp + pool_window));
  return (t_samples - k_temp + 1 - pool_window) / pool_stride + 1;
}

int64_t TokenizerConfig::pooled_steps() const {
  return token_count(samples, k_temp, pool_window, pool_stride);
}

TokenizerNodes declare_tokenizer_params(Graph& g, const TokenizerConfig& cfg) {
  TokenizerNodes n;
  n.w_temp = g.param("tok.w_temp", {cfg.f_temp, cfg.k_temp});
  n.b_temp = g.param("tok.b_temp", {1, cfg.f_temp});
  n.w_spat = g.param("tok.w_spat", {cfg.f_spat, cfg.f_temp * cfg.channels});
  n.w_proj = g.param("tok.w_proj", {cfg.f_spat, cfg.d_model});
  n.b_proj = g.param("tok.b_proj", {1, cfg.d_model});
  return n;
}

NodeId build_tokenizer(Graph& g, NodeId segment, const TokenizerNodes& nodes,
                       const TokenizerConfig& cfg) {
  const auto& seg_shape = g.shape_of(segment);
  if (seg_shape.size() != 2 || seg_shape[0] != cfg.channels || seg_shape[1] != cfg.samples)
    fail("tokenizer: segment shape " + shape_str(seg_shape) + " does not match config " +
         shape_str({cfg.channels, cfg.samples}));
  const int64_t steps = cfg.pooled_steps();

  // Temporal filtering per channel, all filter/channel pairs stacked.
  NodeId z_temp = g.conv_bank(segment, nodes.w_temp, nodes.b_temp);
  // Spatial mixing across every (filter, channel) pair.
  NodeId z_spat = g.matmul(nodes.w_spat, z_temp);
  // Log power: square, average pool, guarded log.
  NodeId pooled = g.avgpool_rows(g.square(z_spat), cfg.pool_window, cfg.pool_stride);
  NodeId logpow = g.log_(g.clamp_min(pooled, 1e-8));
  // 1x1 projection to d_model, one row per pooled step.
  NodeId feats = g.transpose(logpow);  // steps x f_spat
  NodeId tokens = g.add(g.matmul(feats, nodes.w_proj), g.broadcast_rows(nodes.b_proj, steps));
  if (cfg.segment_pooling) tokens = g.mean_rows(tokens);
  return tokens;
}

TensorMap init_tokenizer_params(const TokenizerConfig& cfg, uint64_t seed) {
  CounterRng root(seed);
  auto fill = [&](Tensor& t, uint64_t salt, double scale) {
    CounterRng s = root.stream(salt);
    for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = scale * s.normal(i);
  };
  TensorMap p;
  p["tok.w_temp"] = Tensor({cfg.f_temp, cfg.k_temp});
  fill(p["tok.w_temp"], 0x7401, 1.0 / std::sqrt(static_cast<double>(cfg.k_temp)));
  p["tok.b_temp"] = Tensor({1, cfg.f_temp});
  p["tok.w_spat"] = Tensor({cfg.f_spat, cfg.f_temp * cfg.channels});
  fill(p["tok.w_spat"], 0x7402, 1.0 / std::sqrt(static_cast<double>(cfg.f_temp * cfg.channels)));
  p["tok.w_proj"] = Tensor({cfg.f_spat, cfg.d_model});
  fill(p["tok.w_proj"], 0x7403, 1.0 / std::sqrt(static_cast<double>(cfg.f_spat)));
  p["tok.b_proj"] = Tensor({1, cfg.d_model});
  return p;
}

Tensor Standardizer::apply(const LabeledSegment& segment) const {
  if (mean.numel() != segment.channels)
    fail("standardizer: channel count mismatch");
  Tensor out({segment.channels, segment.samples});
  for (int64_t c = 0; c < segment.channels; ++c) {
    const double mu = mean.data[c];
    const double inv = 1.0 / stdev.data[c];
    const float* src = segment.data.data() + c * segment.samples;
    double* dst = out.data.data() + c * segment.samples;
    for (int64_t i = 0; i < segment.samples; ++i)
      dst[i] = (static_cast<double>(src[i]) - mu) * inv;
  }
  return out;
}

Standardizer fit_standardizer(const std::vector<const LabeledSegment*>& segments) {
  if (segments.empty()) fail("standardizer: no segments");
  const int64_t channels = segments[0]->channels;
  Standardizer s;
  s.mean = Tensor({1, channels});
  s.stdev = Tensor({1, channels});
  for (int64_t c = 0; c < channels; ++c) {
    double sum = 0, sum2 = 0;
    int64_t n = 0;
    for (const LabeledSegment* seg : segments) {
      const float* src = seg->data.data() + c * seg->samples;
      for (int64_t i = 0; i < seg->samples; ++i) {
        sum += src[i];
        sum2 += static_cast<double>(src[i]) * src[i];
        ++n;
      }
    }
    const double mu = sum / static_cast<double>(n);
    const double var = std::max(sum2 / static_cast<double>(n) - mu * mu, 1e-12);
    s.mean.data[c] = mu;
    s.stdev.data[c] = std::sqrt(var);
  }
  return s;
}

Tensor tokenize(const LabeledSegment& segment, const TensorMap& params, const Standardizer& std_,
                const TokenizerConfig& cfg) {
  Graph g;
  TokenizerNodes nodes = declare_tokenizer_params(g, cfg);
  NodeId seg = g.input("seg", {cfg.channels, cfg.samples});
  g.mark_output("tokens", build_tokenizer(g, seg, nodes, cfg));
  TensorMap bindings;
  for (const auto& [name, t] : params)
    if (name.rfind("tok.", 0) == 0) bindings[name] = t;
  bindings["seg"] = std_.apply(segment);
  Run run(g);
  run.forward(bindings);
  return run.value("tokens");
}

}  // namespace teeg
