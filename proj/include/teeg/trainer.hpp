#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "teeg/model.hpp"
#include "teeg/signal.hpp"

namespace teeg {

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 100;
  int batch_size = 8;
  int64_t context_segments = 12;  // 60 s at one token per 5 s segment
  uint64_t seed = 42;
  double clip_norm = 5;
  int patience = 10;
  // 0 = use every sequence each epoch; otherwise a balanced per-epoch
  // subsample (half per class), reshuffled deterministically.
  int64_t max_seq_per_epoch = 0;
  int workers = 1;
};

// Segments grouped into contiguous labeled intervals; sequences never cross
// an interval boundary.
struct SegmentSet {
  std::vector<LabeledSegment> segments;
  std::vector<std::pair<size_t, size_t>> intervals;  // [begin, end) ranges

  void add_interval(std::vector<LabeledSegment> segs);
};

struct TrainingSequence {
  std::vector<size_t> seg_indices;  // strictly increasing t_start, one label
  int label = 0;
};

// Sliding windows of `context` segments within each interval.
std::vector<TrainingSequence> make_sequences(const SegmentSet& set, int64_t context,
                                             int64_t stride);

// Records the latest segment timestamp touched during training, so leakage
// against the test split can be asserted.
struct AccessLog {
  double max_t = -1e300;
  void note(double t) {
    if (t > max_t) max_t = t;
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
};

struct FitResult {
  TensorMap params;  // checkpoint with the best validation loss
  std::vector<EpochStats> history;
  int best_epoch = 0;
  int64_t n_pre_sequences = 0;
  int64_t n_inter_sequences = 0;
};

// Adaptive-moment gradient descent on final-token BCE, gradient clipped at
// clip_norm, early stopping on validation loss. Deterministic given the
// seed (fixed shuffles, fixed accumulation order).
FitResult fit(const SegmentSet& store, const std::vector<TrainingSequence>& train_seqs,
              const std::vector<TrainingSequence>& val_seqs, const ModelConfig& mcfg,
              const Standardizer& standardizer, const TrainConfig& tcfg,
              AccessLog* access_log = nullptr);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace teeg
