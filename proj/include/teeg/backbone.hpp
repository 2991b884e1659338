#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "teeg/graph.hpp"

namespace teeg {

enum class MagMode : uint8_t { kFull = 0, kAttentionOnly = 1, kMemoryOnly = 2 };

MagMode mag_mode_from_string(const std::string& s);
std::string mag_mode_to_string(MagMode m);

// Memory-as-a-Gate block: causal sliding-window attention fused with a
// recurrent neural memory through a learned elementwise gate, plus the
// classification head. attention_only pins the gate to 1, memory_only to 0
// (the unused branch is not built, so its parameters get zero gradients).
struct BackboneConfig {
  int64_t d_model = 64;
  int64_t n_heads = 4;
  int64_t d_k = 16;
  int64_t window = 12;  // attention neighborhood in tokens
  MagMode mode = MagMode::kFull;
};

struct BackboneNodes {
  NodeId w_q, w_k, w_v, w_o;
  NodeId theta, w_kx, b_kx, w_mem, b_mem;
  NodeId w_g, b_g;
  NodeId w_cls, b_cls;
};

BackboneNodes declare_backbone_params(Graph& g, const BackboneConfig& cfg);

struct MagGraphOutputs {
  NodeId outputs;  // L_out x d_model fused representations
  NodeId probs;    // L_out x 1
  NodeId h_last;   // 1 x d_model
};

// tokens holds tail_len carried context rows followed by the chunk; outputs
// cover only the chunk rows. h0 seeds the memory recurrence.
MagGraphOutputs build_mag(Graph& g, NodeId tokens, NodeId h0, int64_t tail_len,
                          const BackboneNodes& nodes, const BackboneConfig& cfg);

TensorMap init_backbone_params(const BackboneConfig& cfg, uint64_t seed);

// Persistent state for streaming evaluation. The carried token tail (the
// last window-1 tokens seen) makes chunked processing exactly equal to a
// single pass; h alone carries the memory pathway.
struct MemoryState {
  Tensor h;     // 1 x d_model
  int64_t step = 0;
  Tensor tail;  // k x d_model, empty while k == 0
};

MemoryState make_memory_state(const BackboneConfig& cfg);

struct MagResult {
  Tensor outputs;             // L x d_model
  std::vector<double> probs;  // length L
};

// Forward one chunk of tokens (L x d_model), carrying state across calls.
MagResult mag_forward(const Tensor& tokens, MemoryState& state, const TensorMap& params,
                      const BackboneConfig& cfg);

// Eq-4 recurrence with a precomputed write vector: sigmoid(theta) * h_prev +
// (1 - sigmoid(theta)) * write, elementwise.
Tensor memory_update(const Tensor& h_prev, const Tensor& write, const Tensor& theta);

// The write transform: tanh(x W + b).
Tensor memory_write(const Tensor& x, const Tensor& w_kx, const Tensor& b_kx);

}  // namespace teeg
