#include <cmath>
#include <random>

#include "doctest.h"
#include "teeg/common.hpp"
#include "teeg/tokenizer.hpp"

using namespace teeg;

namespace {

TokenizerConfig small_config() {
  TokenizerConfig cfg;
  cfg.channels = 3;
  cfg.samples = 26;
  cfg.k_temp = 5;
  cfg.f_temp = 2;
  cfg.f_spat = 2;
  cfg.pool_window = 4;
  cfg.pool_stride = 3;
  cfg.d_model = 3;
  cfg.segment_pooling = false;
  return cfg;
}

LabeledSegment make_segment(const TokenizerConfig& cfg, std::mt19937& rng, double amp = 30) {
  std::uniform_real_distribution<float> dist(static_cast<float>(-amp), static_cast<float>(amp));
  LabeledSegment s;
  s.channels = cfg.channels;
  s.samples = cfg.samples;
  s.data.resize(static_cast<size_t>(cfg.channels * cfg.samples));
  for (auto& v : s.data) v = dist(rng);
  return s;
}

Standardizer identity_standardizer(int64_t channels) {
  Standardizer st;
  st.mean = Tensor({1, channels});
  st.stdev = Tensor::full({1, channels}, 1.0);
  return st;
}

}  // namespace

TEST_CASE("token_count matches the shape formula") {
  CHECK(token_count(1280, 40, 75, 15) == 78);
  CHECK(token_count(115, 40, 75, 15) == 1);
  CHECK_THROWS_AS(token_count(114, 40, 75, 15), Error);
  TokenizerConfig cfg;
  CHECK(cfg.pooled_steps() == 78);
  CHECK(cfg.tokens_per_segment() == 1);
}

TEST_CASE("a zero segment produces identical constant tokens") {
  TokenizerConfig cfg = small_config();
  LabeledSegment seg;
  seg.channels = cfg.channels;
  seg.samples = cfg.samples;
  seg.data.assign(static_cast<size_t>(cfg.channels * cfg.samples), 0.f);
  TensorMap params = init_tokenizer_params(cfg, 1);
  Tensor tokens = tokenize(seg, params, identity_standardizer(cfg.channels), cfg);
  REQUIRE(tokens.rows() == cfg.pooled_steps());
  for (int64_t r = 1; r < tokens.rows(); ++r)
    for (int64_t c = 0; c < tokens.cols(); ++c)
      CHECK(tokens.at(r, c) == tokens.at(0, c));
  CHECK(tokens.all_finite());
}

TEST_CASE("without segment pooling the standard config emits 78 tokens") {
  TokenizerConfig cfg;
  cfg.segment_pooling = false;
  std::mt19937 rng(5);
  LabeledSegment seg = make_segment(cfg, rng);
  TensorMap params = init_tokenizer_params(cfg, 2);
  Tensor tokens = tokenize(seg, params, identity_standardizer(cfg.channels), cfg);
  CHECK(tokens.rows() == 78);
  CHECK(tokens.cols() == cfg.d_model);
  cfg.segment_pooling = true;
  Tensor pooled = tokenize(seg, params, identity_standardizer(cfg.channels), cfg);
  CHECK(pooled.rows() == 1);
  // Segment pooling is the mean over pooled steps.
  for (int64_t c = 0; c < cfg.d_model; ++c) {
    double mean = 0;
    for (int64_t r = 0; r < 78; ++r) mean += tokens.at(r, c);
    mean /= 78;
    CHECK(pooled.at(0, c) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("impulse filter with one-hot mixing reads channel log power") {
  // Unit-impulse temporal filter, spatial one-hot on channel 0, identity
  // projection: each feature equals log of the mean squared signal of
  // channel 0 over the pooled span, computed directly as the oracle.
  TokenizerConfig cfg;
  cfg.channels = 2;
  cfg.samples = 40;
  cfg.k_temp = 1;
  cfg.f_temp = 1;
  cfg.f_spat = 1;
  cfg.pool_window = 8;
  cfg.pool_stride = 8;
  cfg.d_model = 1;
  cfg.segment_pooling = false;
  TensorMap params;
  params["tok.w_temp"] = Tensor::matrix(1, 1, {1});
  params["tok.b_temp"] = Tensor({1, 1});
  params["tok.w_spat"] = Tensor::matrix(1, 2, {1, 0});
  params["tok.w_proj"] = Tensor::matrix(1, 1, {1});
  params["tok.b_proj"] = Tensor({1, 1});

  std::mt19937 rng(7);
  LabeledSegment seg = make_segment(cfg, rng);
  Tensor tokens = tokenize(seg, params, identity_standardizer(2), cfg);
  REQUIRE(tokens.rows() == 5);
  for (int64_t w = 0; w < 5; ++w) {
    double power = 0;
    for (int64_t i = 0; i < 8; ++i) {
      const double v = seg.data[static_cast<size_t>(w * 8 + i)];
      power += v * v;
    }
    power /= 8;
    CHECK(tokens.at(w, 0) == doctest::Approx(std::log(std::max(power, 1e-8))).epsilon(1e-9));
  }
}

TEST_CASE("scaling the input shifts log-power features by 2 log c") {
  TokenizerConfig cfg = small_config();
  cfg.d_model = cfg.f_spat;  // identity projection exposes the log features
  std::mt19937 rng(11);
  TensorMap params = init_tokenizer_params(cfg, 3);
  params["tok.b_temp"] = Tensor({1, cfg.f_temp});
  params["tok.w_proj"] = Tensor::matrix(2, 2, {1, 0, 0, 1});
  params["tok.b_proj"] = Tensor({1, 2});
  LabeledSegment seg = make_segment(cfg, rng, 50);
  const double c = 3.7;
  LabeledSegment scaled = seg;
  for (auto& v : scaled.data) v *= static_cast<float>(c);
  Standardizer st = identity_standardizer(cfg.channels);
  Tensor t0 = tokenize(seg, params, st, cfg);
  Tensor t1 = tokenize(scaled, params, st, cfg);
  for (size_t i = 0; i < t0.data.size(); ++i)
    CHECK(t1.data[i] - t0.data[i] == doctest::Approx(2 * std::log(c)).epsilon(1e-6));
}

TEST_CASE("channel permutation changes tokens unless the mixing is permuted") {
  TokenizerConfig cfg = small_config();
  std::mt19937 rng(13);
  TensorMap params = init_tokenizer_params(cfg, 4);
  LabeledSegment seg = make_segment(cfg, rng);
  LabeledSegment permuted = seg;
  // Swap channels 0 and 2.
  for (int64_t i = 0; i < cfg.samples; ++i) {
    std::swap(permuted.data[static_cast<size_t>(0 * cfg.samples + i)],
              permuted.data[static_cast<size_t>(2 * cfg.samples + i)]);
  }
  Standardizer st = identity_standardizer(cfg.channels);
  Tensor t0 = tokenize(seg, params, st, cfg);
  Tensor t1 = tokenize(permuted, params, st, cfg);
  double diff = 0;
  for (size_t i = 0; i < t0.data.size(); ++i) diff = std::max(diff, std::fabs(t0.data[i] - t1.data[i]));
  CHECK(diff > 1e-6);

  // Permuting the spatial weights the same way restores the tokens.
  TensorMap matched = params;
  Tensor& w = matched["tok.w_spat"];
  for (int64_t f = 0; f < cfg.f_spat; ++f)
    for (int64_t ft = 0; ft < cfg.f_temp; ++ft)
      std::swap(w.at(f, ft * cfg.channels + 0), w.at(f, ft * cfg.channels + 2));
  Tensor t2 = tokenize(permuted, matched, st, cfg);
  for (size_t i = 0; i < t0.data.size(); ++i)
    CHECK(t2.data[i] == doctest::Approx(t0.data[i]).epsilon(1e-9));
}

TEST_CASE("standardizer uses training statistics per channel") {
  std::mt19937 rng(17);
  TokenizerConfig cfg = small_config();
  std::vector<LabeledSegment> segs;
  for (int i = 0; i < 4; ++i) segs.push_back(make_segment(cfg, rng));
  std::vector<const LabeledSegment*> ptrs;
  for (const auto& s : segs) ptrs.push_back(&s);
  Standardizer st = fit_standardizer(ptrs);
  // Mean of standardized training data is zero, variance one.
  for (int64_t c = 0; c < cfg.channels; ++c) {
    double sum = 0, sum2 = 0;
    int64_t n = 0;
    for (const auto& s : segs) {
      Tensor t = st.apply(s);
      for (int64_t i = 0; i < cfg.samples; ++i) {
        sum += t.at(c, i);
        sum2 += t.at(c, i) * t.at(c, i);
        ++n;
      }
    }
    CHECK(sum / n == doctest::Approx(0).epsilon(1e-9).scale(1));
    CHECK(sum2 / n == doctest::Approx(1).epsilon(1e-6));
  }
}

TEST_CASE("tokenizer gradients pass gradcheck at 1e-4") {
  TokenizerConfig cfg = small_config();
  std::mt19937 rng(19);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (int point = 0; point < 3; ++point) {
    Graph g;
    TokenizerNodes nodes = declare_tokenizer_params(g, cfg);
    NodeId seg = g.input("seg", {cfg.channels, cfg.samples});
    NodeId tokens = build_tokenizer(g, seg, nodes, cfg);
    g.mark_output("y", g.mean_all(g.square(tokens)));
    TensorMap point_map = init_tokenizer_params(cfg, 100 + point);
    Tensor seg_data({cfg.channels, cfg.samples});
    for (auto& v : seg_data.data) v = dist(rng);
    point_map["seg"] = seg_data;
    CHECK(gradcheck(g, point_map, "y", 1e-5) < 1e-4);
  }
}
