#pragma once

#include <cstdint>

#include "teeg/graph.hpp"
#include "teeg/signal.hpp"

namespace teeg {

// Spatial tokenizer: temporal filter bank, spatial mixing across all
// channels, squared average-pooled log power, then a 1x1 projection to the
// model dimension. One token per pooled step, or one per segment when
// segment pooling is on.
struct TokenizerConfig {
  int64_t channels = 18;
  int64_t samples = 1280;
  int64_t k_temp = 40;      // temporal kernel length (~156 ms at 256 Hz)
  int64_t f_temp = 40;      // temporal filters
  int64_t f_spat = 40;      // spatial mixtures
  int64_t pool_window = 75;
  int64_t pool_stride = 15;
  int64_t d_model = 64;
  bool segment_pooling = true;

  int64_t tokens_per_segment() const { return segment_pooling ? 1 : pooled_steps(); }
  int64_t pooled_steps() const;
};

// Pooled step count: floor((T - K + 1 - W)/stride) + 1. Inputs shorter than
// K + W are rejected.
int64_t token_count(int64_t t_samples, int64_t k_temp, int64_t pool_window, int64_t pool_stride);

struct TokenizerNodes {
  NodeId w_temp, b_temp, w_spat, w_proj, b_proj;
};

// Declare the tokenizer's parameter leaves (once per graph).
TokenizerNodes declare_tokenizer_params(Graph& g, const TokenizerConfig& cfg);

// Segment (channels x samples) -> tokens (L x d_model).
NodeId build_tokenizer(Graph& g, NodeId segment, const TokenizerNodes& nodes,
                       const TokenizerConfig& cfg);

TensorMap init_tokenizer_params(const TokenizerConfig& cfg, uint64_t seed);

// Per-channel training-split standardization applied before tokenization.
struct Standardizer {
  Tensor mean;   // 1 x channels
  Tensor stdev;  // 1 x channels

  // Segment data (float, channels x samples) -> standardized f64 tensor.
  Tensor apply(const LabeledSegment& segment) const;
};

Standardizer fit_standardizer(const std::vector<const LabeledSegment*>& segments);

// Standalone forward pass for one segment (builds a small graph internally).
Tensor tokenize(const LabeledSegment& segment, const TensorMap& params, const Standardizer& std,
                const TokenizerConfig& cfg);

}  // namespace teeg
