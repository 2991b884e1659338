#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "teeg/checkpoint.hpp"
#include "teeg/common.hpp"
#include "teeg/trainer.hpp"

using namespace teeg;

namespace {

ModelConfig toy_model() {
  ModelConfig cfg;
  cfg.tok.channels = 2;
  cfg.tok.samples = 64;
  cfg.tok.k_temp = 9;
  cfg.tok.f_temp = 3;
  cfg.tok.f_spat = 3;
  cfg.tok.pool_window = 16;
  cfg.tok.pool_stride = 8;
  cfg.tok.d_model = 4;
  cfg.tok.segment_pooling = true;
  cfg.bb.d_model = 4;
  cfg.bb.n_heads = 2;
  cfg.bb.d_k = 2;
  cfg.bb.window = 3;
  return cfg;
}

// Class 1: strong 8 Hz-ish oscillation; class 0: weak noise. Linearly
// separable in log band power, which is exactly what the tokenizer reads.
SegmentSet toy_data(const ModelConfig& cfg, int per_class, uint64_t seed) {
  SegmentSet set;
  std::mt19937 rng(static_cast<unsigned>(seed));
  std::uniform_real_distribution<float> noise(-1, 1);
  for (int label = 0; label < 2; ++label) {
    std::vector<LabeledSegment> segs;
    for (int i = 0; i < per_class; ++i) {
      LabeledSegment s;
      s.channels = cfg.tok.channels;
      s.samples = cfg.tok.samples;
      s.label = label;
      s.t_start = (label ? 100000.0 : 0.0) + 5.0 * i;
      s.data.resize(static_cast<size_t>(s.channels * s.samples));
      for (int64_t c = 0; c < s.channels; ++c)
        for (int64_t t = 0; t < s.samples; ++t) {
          float v = noise(rng);
          if (label == 1)
            v += 6.f * std::sin(static_cast<float>(2 * 3.14159265 * t / 8.0 + c));
          s.data[static_cast<size_t>(c * s.samples + t)] = v;
        }
      segs.push_back(std::move(s));
    }
    set.add_interval(std::move(segs));
  }
  return set;
}

Standardizer unit_standardizer(int64_t channels) {
  Standardizer st;
  st.mean = Tensor({1, channels});
  st.stdev = Tensor::full({1, channels}, 1.0);
  return st;
}

}  // namespace

TEST_CASE("make_sequences follows context and stride") {
  ModelConfig cfg = toy_model();
  SegmentSet set = toy_data(cfg, 360, 1);
  auto eval_seqs = make_sequences(set, 12, 12);
  CHECK(eval_seqs.size() == 2 * (360 / 12));
  for (const auto& s : eval_seqs) CHECK(s.seg_indices.size() == 12);

  SegmentSet exact = toy_data(cfg, 12, 2);
  CHECK(make_sequences(exact, 12, 12).size() == 2);
  SegmentSet small = toy_data(cfg, 11, 3);
  CHECK(make_sequences(small, 12, 12).empty());
  // stride 1 training windows: n - context + 1 per interval.
  CHECK(make_sequences(exact, 4, 1).size() == 2 * 9);
}

TEST_CASE("fit separates a linearly separable toy stream") {
  ModelConfig cfg = toy_model();
  SegmentSet set = toy_data(cfg, 24, 4);
  auto train_seqs = make_sequences(set, 4, 1);
  auto val_seqs = make_sequences(set, 4, 4);
  TrainConfig tcfg;
  tcfg.epochs = 50;
  tcfg.batch_size = 8;
  tcfg.context_segments = 4;
  tcfg.patience = 50;
  tcfg.seed = 7;
  FitResult res = fit(set, train_seqs, val_seqs, cfg, unit_standardizer(cfg.tok.channels), tcfg);
  REQUIRE(!res.history.empty());
  CHECK(res.history.back().train_loss < 0.05);
  CHECK(res.n_pre_sequences > 0);
  CHECK(res.n_inter_sequences > 0);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  ModelConfig cfg = toy_model();
  SegmentSet set = toy_data(cfg, 8, 5);
  auto seqs = make_sequences(set, 4, 1);
  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.lr = 0;
  tcfg.patience = 99;
  FitResult res = fit(set, seqs, {}, cfg, unit_standardizer(cfg.tok.channels), tcfg);
  TensorMap init = init_model_params(cfg, tcfg.seed);
  for (const auto& [name, t] : init) {
    REQUIRE(res.params.count(name));
    CHECK(res.params.at(name).data == t.data);
  }
}

TEST_CASE("identical seeds give bitwise identical checkpoints") {
  ModelConfig cfg = toy_model();
  SegmentSet set = toy_data(cfg, 10, 6);
  auto train_seqs = make_sequences(set, 4, 1);
  auto val_seqs = make_sequences(set, 4, 4);
  TrainConfig tcfg;
  tcfg.epochs = 4;
  tcfg.patience = 99;
  tcfg.seed = 11;
  FitResult a = fit(set, train_seqs, val_seqs, cfg, unit_standardizer(cfg.tok.channels), tcfg);
  FitResult b = fit(set, train_seqs, val_seqs, cfg, unit_standardizer(cfg.tok.channels), tcfg);
  CHECK(checkpoint_to_bytes(a.params) == checkpoint_to_bytes(b.params));
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
}

TEST_CASE("single-class training data is an error") {
  ModelConfig cfg = toy_model();
  SegmentSet set = toy_data(cfg, 8, 8);
  auto seqs = make_sequences(set, 4, 1);
  std::vector<TrainingSequence> pre_only;
  for (const auto& s : seqs)
    if (s.label == 1) pre_only.push_back(s);
  TrainConfig tcfg;
  CHECK_THROWS_WITH_AS(fit(set, pre_only, {}, cfg, unit_standardizer(cfg.tok.channels), tcfg),
                       doctest::Contains("both classes"), Error);
}

TEST_CASE("one small step never increases the loss on its own batch") {
  ModelConfig cfg = toy_model();
  SegmentSet set = toy_data(cfg, 4, 9);
  auto seqs = make_sequences(set, 4, 4);
  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.lr = 1e-5;
  tcfg.batch_size = static_cast<int>(seqs.size());
  tcfg.patience = 9;
  // Loss of the whole set before and after exactly one update.
  Standardizer st = unit_standardizer(cfg.tok.channels);
  auto mean_loss = [&](const TensorMap& params) {
    double total = 0;
    for (const auto& seq : seqs) {
      auto g = build_sequence_graph(cfg, static_cast<int64_t>(seq.seg_indices.size()));
      TensorMap bindings = params;
      for (size_t i = 0; i < seq.seg_indices.size(); ++i)
        bindings["seg." + std::to_string(i)] = st.apply(set.segments[seq.seg_indices[i]]);
      bindings["h0"] = Tensor({1, cfg.bb.d_model});
      bindings["target"] = Tensor::scalar(seq.label);
      total += evaluate(*g, bindings).at("loss").data[0];
    }
    return total / static_cast<double>(seqs.size());
  };
  const double before = mean_loss(init_model_params(cfg, tcfg.seed));
  FitResult res = fit(set, seqs, {}, cfg, st, tcfg);
  const double after = mean_loss(res.params);
  CHECK(after <= before + 1e-12);
}

TEST_CASE("access log records the latest segment read during fit") {
  ModelConfig cfg = toy_model();
  SegmentSet set = toy_data(cfg, 8, 10);
  auto seqs = make_sequences(set, 4, 1);
  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.patience = 5;
  AccessLog log;
  fit(set, seqs, {}, cfg, unit_standardizer(cfg.tok.channels), tcfg, &log);
  double expect = -1e300;
  for (const auto& s : set.segments) expect = std::max(expect, s.t_start);
  CHECK(log.max_t == expect);
}

TEST_CASE("history csv is written with one row per epoch") {
  std::vector<EpochStats> h{{0, 0.5, 0.6}, {1, 0.25, 0.3}};
  const std::string path = "/tmp/teeg_history.csv";
  write_history_csv(path, h);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "epoch,train_loss,val_loss");
  int rows = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}
