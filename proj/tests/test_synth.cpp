#include <cmath>
#include <algorithm>
#include <fstream>
#include <filesystem>

#include "doctest.h"
#include "teeg/common.hpp"
#include "teeg/signal.hpp"
#include "teeg/synth.hpp"

using namespace teeg;

namespace {

// Small fast subject for unit checks (protocol eligibility not required).
SubjectProfile tiny_profile() {
  SubjectProfile p;
  p.id = "tiny";
  p.seed = 77;
  p.n_clusters = 2;
  p.lead_in_s = 600;
  p.gap_s = 900;
  p.tail_s = 300;
  p.seizure_dur_s = 30;
  p.file_len_s = 600;
  return p;
}

double band_power(const std::vector<float>& x, int64_t from, int64_t to, double fs, double lo,
                  double hi) {
  SignalConfig cfg;
  cfg.band_lo_hz = lo;
  cfg.band_hi_hz = hi;
  FilterBank bank = design_filters(fs, cfg);
  bank.notch = Biquad{};
  std::vector<float> filtered(x.size());
  ChannelFilterState state;
  apply_filters_streaming(bank, x.data(), filtered.data(), static_cast<int64_t>(x.size()), state);
  double acc = 0;
  for (int64_t i = from; i < to; ++i)
    acc += static_cast<double>(filtered[static_cast<size_t>(i)]) *
           filtered[static_cast<size_t>(i)];
  return acc / static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("same seed generates bitwise identical records") {
  SubjectProfile p = tiny_profile();
  SynthGenerator a(p), b(p);
  for (int64_t f = 0; f < a.n_files(); ++f) {
    EEGRecord ra = a.generate_file(f);
    EEGRecord rb = b.generate_file(f);
    CHECK(ra.data == rb.data);
  }
  SubjectProfile q = p;
  q.seed = 78;
  SynthGenerator c(q), d(p);
  EEGRecord other = c.generate_file(0);
  EEGRecord same = d.generate_file(0);
  CHECK(other.data != same.data);
}

TEST_CASE("profiles with overlapping clusters are rejected") {
  SubjectProfile p = tiny_profile();
  p.gap_s = 20;  // shorter than the seizure itself
  CHECK_THROWS_WITH_AS(SynthGenerator{p}, doctest::Contains("overlapping"), Error);
  SubjectProfile one = tiny_profile();
  one.n_clusters = 1;
  CHECK_THROWS_AS(SynthGenerator{one}, Error);
}

TEST_CASE("planted drift reaches the target band-power ratio at the window end") {
  SubjectProfile p = tiny_profile();
  p.lead_in_s = 2700;  // full 1800 s window with margin
  p.gap_s = 3000;
  p.drift_power_ratio = 3.0;
  p.artifact_rate_per_hour = 0;
  p.file_len_s = 900;
  SynthGenerator gen(p);
  // Stitch the whole run together (small profile).
  std::vector<float> ch0;
  double t0 = 0;
  for (int64_t f = 0; f < gen.n_files(); ++f) {
    EEGRecord rec = gen.generate_file(f);
    if (f == 0) t0 = rec.start_time;
    ch0.insert(ch0.end(), rec.data[0].begin(), rec.data[0].end());
  }
  const auto [d0, d1] = gen.truth().drift_intervals[0];
  const int64_t fs = 256;
  // Final 60 s of the drift window vs a baseline stretch before it.
  const int64_t w1 = static_cast<int64_t>((d1 - t0) * fs);
  const int64_t w0 = w1 - 60 * fs;
  const int64_t b1 = static_cast<int64_t>((d0 - t0) * fs) - 30 * fs;
  const int64_t b0 = b1 - 120 * fs;
  const double p_end = band_power(ch0, w0, w1, 256, p.drift_lo_hz, p.drift_hi_hz);
  const double p_base = band_power(ch0, b0, b1, 256, p.drift_lo_hz, p.drift_hi_hz);
  // Amplitude ramps linearly, so power over the last 60 s slightly
  // undershoots the endpoint target; the oracle allows +-20%.
  const double ratio = p_end / p_base;
  CHECK(ratio > 3.0 * 0.8);
  CHECK(ratio < 3.0 * 1.2);
}

TEST_CASE("zero drift gain leaves pre-ictal and inter-ictal spectra alike") {
  SubjectProfile p = tiny_profile();
  p.lead_in_s = 2700;
  p.gap_s = 3000;
  p.drift_power_ratio = 1.0;  // gain zero
  p.artifact_rate_per_hour = 0;
  p.file_len_s = 900;
  SynthGenerator gen(p);
  std::vector<float> ch0;
  double t0 = 0;
  for (int64_t f = 0; f < gen.n_files(); ++f) {
    EEGRecord rec = gen.generate_file(f);
    if (f == 0) t0 = rec.start_time;
    ch0.insert(ch0.end(), rec.data[0].begin(), rec.data[0].end());
  }
  // Two-sample comparison of per-window band powers: Welch t statistic on
  // log powers should stay below the 1% two-sided normal quantile.
  const auto [d0, d1] = gen.truth().drift_intervals[0];
  const int64_t fs = 256;
  auto window_powers = [&](double lo_t, double hi_t) {
    std::vector<double> powers;
    for (double t = lo_t; t + 5 <= hi_t; t += 5) {
      const int64_t s0 = static_cast<int64_t>((t - t0) * fs);
      powers.push_back(std::log(band_power(ch0, s0, s0 + 5 * fs, 256, 15, 25)));
    }
    return powers;
  };
  auto pre = window_powers(d0 + 30, d1);
  auto inter = window_powers(t0 + 200, d0 - 60);
  REQUIRE(pre.size() > 20);
  REQUIRE(inter.size() > 20);
  auto mean_var = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s2 = 0;
    for (double x : v) s2 += (x - m) * (x - m);
    s2 /= static_cast<double>(v.size() - 1);
    return std::pair<double, double>(m, s2);
  };
  const auto [m1, v1] = mean_var(pre);
  const auto [m2, v2] = mean_var(inter);
  const double t_stat = (m1 - m2) / std::sqrt(v1 / pre.size() + v2 / inter.size());
  CHECK(std::fabs(t_stat) < 2.576);  // p > 0.01
}

TEST_CASE("artifact multiplier scales the burst count") {
  SubjectProfile base = tiny_profile();
  base.artifact_rate_per_hour = 2.0;
  SubjectProfile none = artifact_profile(base, 0);
  CHECK(SynthGenerator(none).truth().artifacts.empty());

  // 10 h at multiplier 10 on 2/h: expect about 200 bursts, within +-30%.
  SubjectProfile big = artifact_profile(base, 10);
  CHECK(big.artifact_rate_per_hour == 20.0);
  big.n_clusters = 2;
  big.lead_in_s = 16000;
  big.gap_s = 16000;
  big.tail_s = 36000 - 2 * big.gap_s - big.seizure_dur_s;
  REQUIRE(big.total_s() == doctest::Approx(36000).epsilon(1e-9));  // 10 h
  SynthGenerator gen(big);
  const double expect = 20.0 * big.total_s() / 3600.0;
  const double got = static_cast<double>(gen.truth().artifacts.size());
  CHECK(got > expect * 0.7);
  CHECK(got < expect * 1.3);
  CHECK_THROWS_AS(artifact_profile(base, -1), Error);
}

TEST_CASE("artifacts land in pre-ictal and inter-ictal periods at similar rates") {
  SubjectProfile p = tiny_profile();
  p.n_clusters = 4;
  p.lead_in_s = 2700;
  p.gap_s = 3000;
  p.tail_s = 2000;
  p.artifact_rate_per_hour = 120;  // dense so both regions get counts
  SynthGenerator gen(p);
  double pre_s = 0;
  for (const auto& [d0, d1] : gen.truth().drift_intervals) pre_s += d1 - d0;
  const double total_s = p.total_s();
  int64_t in_pre = 0;
  for (const ArtifactBurst& b : gen.truth().artifacts) {
    for (const auto& [d0, d1] : gen.truth().drift_intervals)
      if (b.t >= d0 && b.t < d1) {
        ++in_pre;
        break;
      }
  }
  const double rate_pre = static_cast<double>(in_pre) / pre_s;
  const double rate_all = static_cast<double>(gen.truth().artifacts.size()) / total_s;
  CHECK(rate_pre > 0.5 * rate_all);
  CHECK(rate_pre < 2.0 * rate_all);
}

TEST_CASE("generated annotations rebuild the planted pre-ictal windows") {
  SubjectProfile p;
  p.id = "proto";
  p.seed = 5;
  p.n_clusters = 3;
  SynthGenerator gen(p);
  auto files = gen.annotations();
  std::vector<Seizure> seizures;
  for (const auto& fa : files)
    for (const auto& s : fa.seizures)
      seizures.push_back({fa.start_time + s.onset_s, fa.start_time + s.offset_s});
  std::sort(seizures.begin(), seizures.end(),
            [](const Seizure& a, const Seizure& b) { return a.onset < b.onset; });
  auto clusters = cluster_seizures(seizures);
  REQUIRE(clusters.size() == 3);
  std::vector<RecordingExtent> extents{{gen.base_time(), gen.base_time() + p.total_s()}};
  IntervalMap map = build_interval_map(clusters, extents);
  size_t di = 0;
  for (const auto& iv : map.intervals) {
    if (iv.label != IntervalLabel::kPreictal) continue;
    REQUIRE(di < gen.truth().drift_intervals.size());
    CHECK(iv.t0 == gen.truth().drift_intervals[di].first);
    CHECK(iv.t1 == gen.truth().drift_intervals[di].second);
    ++di;
  }
  CHECK(di == gen.truth().drift_intervals.size());
  // Eligibility holds for generated subjects.
  int valid = 0;
  for (const auto& c : clusters) valid += c.valid;
  CHECK(check_eligibility(true, true, valid).include);
}

TEST_CASE("written EDF files reparse to the signal within one quantization step") {
  SubjectProfile p = tiny_profile();
  const std::string dir = "/tmp/teeg_synth_out";
  std::filesystem::remove_all(dir);
  SynthOutput out = write_subject(p, dir);
  SynthGenerator gen(p);
  const double step = 3000.0 / 65535.0;
  REQUIRE(out.edf_paths.size() == static_cast<size_t>(gen.n_files()));
  for (int64_t f = 0; f < gen.n_files(); ++f) {
    EEGRecord expect = gen.generate_file(f);
    auto [header, parsed] = parse_edf_file(out.edf_paths[static_cast<size_t>(f)]);
    REQUIRE(parsed.n_samples() == expect.n_samples());
    CHECK(parsed.start_time == expect.start_time);
    double max_err = 0;
    for (size_t c = 0; c < expect.data.size(); ++c)
      for (int64_t i = 0; i < expect.n_samples(); ++i)
        max_err = std::max(max_err, std::fabs(static_cast<double>(parsed.data[c][i]) -
                                              expect.data[c][i]));
    CHECK(max_err <= step);
  }
  // Summary and annotations agree through both parsers.
  std::ifstream sf(out.summary_path);
  std::string summary((std::istreambuf_iterator<char>(sf)), std::istreambuf_iterator<char>());
  auto from_summary = parse_summary(summary);
  std::ifstream af(out.annotations_path);
  std::string ann((std::istreambuf_iterator<char>(af)), std::istreambuf_iterator<char>());
  auto from_json = annotations_from_json(ann);
  REQUIRE(from_summary.size() == from_json.size());
  int json_seizures = 0, summary_seizures = 0;
  for (size_t i = 0; i < from_json.size(); ++i) {
    summary_seizures += static_cast<int>(from_summary[i].seizures.size());
    json_seizures += static_cast<int>(from_json[i].seizures.size());
  }
  CHECK(summary_seizures == json_seizures);
  CHECK(summary_seizures == 2);
  std::filesystem::remove_all(dir);
}
