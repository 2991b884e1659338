#pragma once

#include <memory>

#include "teeg/backbone.hpp"
#include "teeg/tokenizer.hpp"

namespace teeg {

struct ModelConfig {
  TokenizerConfig tok;
  BackboneConfig bb;
};

// Tokenizer + backbone parameters, deterministically initialized.
TensorMap init_model_params(const ModelConfig& cfg, uint64_t seed);

// Training graph over one sequence of segments: per-segment tokenizer
// subgraphs feed the MAG block; supervision is the final token's
// probability. Inputs: "seg.<i>" (channels x samples), "h0" (1 x d_model),
// "target" (1 x 1 in {0,1}). Outputs: "probs", "p_last", "loss".
std::unique_ptr<Graph> build_sequence_graph(const ModelConfig& cfg, int64_t n_segments);

// Clamped binary cross-entropy on one probability.
double bce_loss(double p, int y);

}  // namespace teeg
