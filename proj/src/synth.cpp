#include "teeg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "teeg/common.hpp"
#include "teeg/rng.hpp"
#include "teeg/signal.hpp"

namespace teeg {

namespace {
constexpr double kPi = 3.14159265358979323846;
// 2024-01-01 08:00:00 on the days-from-civil clock.
constexpr double kBaseTime = 19723.0 * 86400.0 + 8 * 3600;
constexpr double kPhysRange = 1500.0;
constexpr int kNoiseStages = 5;
constexpr int kDriftOscillators = 6;
const double kStageHz[kNoiseStages] = {0.5, 1.5, 4.5, 13.5, 40.5};
}  // namespace

SubjectProfile artifact_profile(const SubjectProfile& base, double rate_multiplier) {
  if (rate_multiplier < 0) fail("artifact_profile: negative multiplier");
  SubjectProfile p = base;
  p.artifact_rate_per_hour *= rate_multiplier;
  return p;
}

std::string ground_truth_to_json(const GroundTruth& truth) {
  nlohmann::json seiz = nlohmann::json::array();
  for (const Seizure& s : truth.seizures) seiz.push_back({{"onset", s.onset}, {"offset", s.offset}});
  nlohmann::json drift = nlohmann::json::array();
  for (const auto& [d0, d1] : truth.drift_intervals) drift.push_back({d0, d1});
  nlohmann::json art = nlohmann::json::array();
  for (const ArtifactBurst& b : truth.artifacts)
    art.push_back({{"t", b.t}, {"duration", b.duration}});
  nlohmann::json j{{"seizures", seiz}, {"drift_intervals", drift}, {"artifacts", art}};
  return j.dump(2) + "\n";
}

struct SynthGenerator::ChannelState {
  CounterRng white{0};
  double ar[kNoiseStages] = {0, 0, 0, 0, 0};
  double scale = 1.0;       // raw noise -> noise_rms_uv
  double drift_amp = 0;     // per-oscillator amplitude at the window end
  double alpha_phase = 0;
  double drift_phase[kDriftOscillators] = {0, 0, 0, 0, 0, 0};
  std::vector<CounterRng> burst_white;  // one stream per artifact event

  void reset_noise() {
    for (double& s : ar) s = 0;
  }
};

SynthGenerator::~SynthGenerator() = default;
SynthGenerator::SynthGenerator(SynthGenerator&&) noexcept = default;

SynthGenerator::SynthGenerator(const SubjectProfile& profile) : profile_(profile) {
  if (profile_.n_clusters < 2) fail("synth: profile needs at least 2 clusters");
  if (profile_.gap_s <= profile_.seizure_dur_s)
    fail("synth: profile yields overlapping clusters (gap " + std::to_string(profile_.gap_s) +
         " s <= seizure duration)");
  if (profile_.fs <= 0 || profile_.fs != std::floor(profile_.fs))
    fail("synth: sampling rate must be a positive integer");
  if (profile_.file_len_s < 1 || profile_.file_len_s != std::floor(profile_.file_len_s))
    fail("synth: file length must be a whole number of seconds");

  base_time_ = kBaseTime;
  total_samples_ = static_cast<int64_t>(std::llround(profile_.total_s() * profile_.fs));
  n_files_ = (total_samples_ / static_cast<int64_t>(profile_.fs) + // whole seconds
              static_cast<int64_t>(profile_.file_len_s) - 1) /
             static_cast<int64_t>(profile_.file_len_s);

  for (int k = 0; k < profile_.n_clusters; ++k) {
    const double onset = profile_.lead_in_s + k * profile_.gap_s;
    truth_.seizures.push_back({base_time_ + onset, base_time_ + onset + profile_.seizure_dur_s});
    truth_.drift_intervals.push_back(
        {base_time_ + std::max(0.0, onset - 2100), base_time_ + onset - 300});
  }

  CounterRng root(profile_.seed);
  SeqRng freq_rng(root.stream(0xf5e0));
  // drift oscillator frequencies, shared across channels
  for (int o = 0; o < kDriftOscillators; ++o)
    drift_freqs_.push_back(freq_rng.uniform(profile_.drift_lo_hz, profile_.drift_hi_hz));

  // Artifact episodes: bursts arrive in small clumps so that dense regimes
  // look like muscle-artifact trains rather than isolated blips; the
  // expected burst rate stays at artifact_rate_per_hour.
  if (profile_.artifact_rate_per_hour > 0) {
    SeqRng art(root.stream(0xa47));
    const double mean_per_episode = 3.0;
    const double episode_rate = profile_.artifact_rate_per_hour / mean_per_episode;
    double t = 0;
    const double total = profile_.total_s();
    while (true) {
      t += -std::log(std::max(art.uniform(), 1e-12)) / episode_rate * 3600.0;
      if (t >= total) break;
      // 2 to 4 bursts per episode, mean 3.
      const int n_bursts = 2 + static_cast<int>(art.below(3));
      double bt = t;
      for (int b = 0; b < n_bursts && bt < total; ++b) {
        const double dur = art.uniform(0.5, 2.0);
        truth_.artifacts.push_back({base_time_ + bt, dur});
        bt += dur + art.uniform(2.0, 8.0);
      }
    }
  }

  channels_.resize(canonical_montage().size());
  for (size_t c = 0; c < channels_.size(); ++c) {
    ChannelState& ch = channels_[c];
    ch.white = root.stream(0xc000 + c);
    SeqRng ph(root.stream(0xd000 + c));
    ch.alpha_phase = ph.uniform(0, 2 * kPi);
    for (int o = 0; o < kDriftOscillators; ++o) ch.drift_phase[o] = ph.uniform(0, 2 * kPi);
    for (size_t e = 0; e < truth_.artifacts.size(); ++e)
      ch.burst_white.push_back(root.stream(0xe000 + e * 64 + c));
  }
  calibrate();
}

void SynthGenerator::fill_block(int64_t abs_sample0, int64_t n,
                                std::vector<std::vector<float>>& out) {
  const double fs = profile_.fs;
  const double inv_fs = 1.0 / fs;
  double stage_rho[kNoiseStages], stage_gain[kNoiseStages], stage_w[kNoiseStages];
  for (int j = 0; j < kNoiseStages; ++j) {
    stage_rho[j] = std::exp(-2 * kPi * kStageHz[j] * inv_fs);
    stage_gain[j] = std::sqrt(1 - stage_rho[j] * stage_rho[j]);
    stage_w[j] = std::pow(kStageHz[j], (1.0 - profile_.noise_exponent) / 2.0);
  }
  for (size_t c = 0; c < channels_.size(); ++c) {
    ChannelState& ch = channels_[c];
    float* dst = out[c].data();
    for (int64_t i = 0; i < n; ++i) {
      const int64_t k = abs_sample0 + i;
      const double t = static_cast<double>(k) * inv_fs;  // relative seconds
      const double abs_t = base_time_ + t;
      const double w = ch.white.normal(static_cast<uint64_t>(k));
      double pink = 0;
      for (int j = 0; j < kNoiseStages; ++j) {
        ch.ar[j] = stage_rho[j] * ch.ar[j] + stage_gain[j] * w;
        pink += stage_w[j] * ch.ar[j];
      }
      double v = ch.scale * pink +
                 profile_.alpha_amp_uv * std::sin(2 * kPi * profile_.alpha_hz * t + ch.alpha_phase);
      for (const auto& [d0, d1] : truth_.drift_intervals) {
        if (abs_t < d0 || abs_t >= d1) continue;
        const double ramp = (abs_t - d0) / (d1 - d0);
        double drift = 0;
        for (int o = 0; o < kDriftOscillators; ++o)
          drift += std::sin(2 * kPi * drift_freqs_[o] * t + ch.drift_phase[o]);
        v += ch.drift_amp * ramp * drift;
        break;
      }
      for (const Seizure& s : truth_.seizures) {
        if (abs_t >= s.onset && abs_t < s.offset)
          v += 300.0 * std::sin(2 * kPi * 3.0 * t);
      }
      dst[i] = static_cast<float>(v);
    }
  }
  // Artifact bursts, label-independent and additive.
  for (size_t e = 0; e < truth_.artifacts.size(); ++e) {
    const ArtifactBurst& b = truth_.artifacts[e];
    const int64_t b0 = static_cast<int64_t>(std::llround((b.t - base_time_) * fs));
    const int64_t b1 = b0 + static_cast<int64_t>(std::llround(b.duration * fs));
    const int64_t lo = std::max(b0, abs_sample0);
    const int64_t hi = std::min(b1, abs_sample0 + n);
    if (lo >= hi) continue;
    for (size_t c = 0; c < channels_.size(); ++c) {
      ChannelState& ch = channels_[c];
      float* dst = out[c].data();
      for (int64_t k = lo; k < hi; ++k) {
        const double r = static_cast<double>(k - b0) / static_cast<double>(b1 - b0);
        const double hann = 0.5 * (1 - std::cos(2 * kPi * r));
        const double wv = ch.burst_white[e].normal(static_cast<uint64_t>(k - b0));
        dst[k - abs_sample0] += static_cast<float>(profile_.artifact_amp_uv * hann * wv);
      }
    }
  }
}

void SynthGenerator::calibrate() {
  // Replay the first 60 s of baseline (noise + alpha only) to set the noise
  // scale and the drift amplitude from the measured band power.
  const int64_t n = static_cast<int64_t>(60 * profile_.fs);
  const int64_t settle = static_cast<int64_t>(5 * profile_.fs);
  FilterBank band;
  {
    SignalConfig cfg;
    cfg.band_lo_hz = profile_.drift_lo_hz;
    cfg.band_hi_hz = profile_.drift_hi_hz;
    cfg.notch_hz = 60;
    cfg.notch_q = 20;
    band = design_filters(profile_.fs, cfg);
    band.notch = Biquad{};  // band power probe only
  }
  for (ChannelState& ch : channels_) {
    double raw_ms = 0;
    std::vector<float> base(static_cast<size_t>(n));
    for (int64_t k = 0; k < n; ++k) {
      const double w = ch.white.normal(static_cast<uint64_t>(k));
      double pink = 0;
      for (int j = 0; j < kNoiseStages; ++j) {
        const double rho = std::exp(-2 * kPi * kStageHz[j] / profile_.fs);
        ch.ar[j] = rho * ch.ar[j] + std::sqrt(1 - rho * rho) * w;
        pink += std::pow(kStageHz[j], (1.0 - profile_.noise_exponent) / 2.0) * ch.ar[j];
      }
      if (k >= settle) raw_ms += pink * pink;
      base[static_cast<size_t>(k)] = static_cast<float>(pink);
    }
    ch.reset_noise();
    raw_ms /= static_cast<double>(n - settle);
    ch.scale = profile_.noise_rms_uv / std::max(std::sqrt(raw_ms), 1e-12);

    // Band power of the scaled baseline plus the alpha rhythm.
    const double t_step = 1.0 / profile_.fs;
    for (int64_t k = 0; k < n; ++k)
      base[static_cast<size_t>(k)] = static_cast<float>(
          ch.scale * base[static_cast<size_t>(k)] +
          profile_.alpha_amp_uv * std::sin(2 * kPi * profile_.alpha_hz * k * t_step +
                                           ch.alpha_phase));
    std::vector<float> filtered(static_cast<size_t>(n));
    ChannelFilterState fstate;
    apply_filters_streaming(band, base.data(), filtered.data(), n, fstate);
    double band_ms = 0;
    for (int64_t k = settle; k < n; ++k)
      band_ms += static_cast<double>(filtered[static_cast<size_t>(k)]) *
                 filtered[static_cast<size_t>(k)];
    band_ms /= static_cast<double>(n - settle);

    // n oscillators at amplitude a contribute n*a^2/2 of band power; hit
    // ratio * baseline at the ramp end.
    const double extra = std::max(profile_.drift_power_ratio - 1.0, 0.0) * band_ms;
    ch.drift_amp = std::sqrt(2.0 * extra / kDriftOscillators);
  }
}

std::vector<FileAnnotations> SynthGenerator::annotations() const {
  std::vector<FileAnnotations> files;
  const int64_t flen = static_cast<int64_t>(profile_.file_len_s);
  const int64_t total_sec = total_samples_ / static_cast<int64_t>(profile_.fs);
  for (int64_t f = 0; f < n_files_; ++f) {
    FileAnnotations fa;
    char name[64];
    std::snprintf(name, sizeof name, "%s_%02lld.edf", profile_.id.c_str(),
                  static_cast<long long>(f + 1));
    fa.file = name;
    const int64_t sec0 = f * flen;
    const int64_t sec1 = std::min(total_sec, sec0 + flen);
    fa.start_time = base_time_ + static_cast<double>(sec0);
    for (const Seizure& s : truth_.seizures) {
      const double rel_on = s.onset - fa.start_time;
      const double rel_off = s.offset - fa.start_time;
      if (rel_on >= 0 && rel_on < static_cast<double>(sec1 - sec0))
        fa.seizures.push_back({rel_on, rel_off});
    }
    files.push_back(std::move(fa));
  }
  return files;
}

std::string SynthGenerator::summary_text() const {
  std::string out = "Data Sampling Rate: " + std::to_string(static_cast<int>(profile_.fs)) +
                    " Hz\n\n";
  for (const FileAnnotations& fa : annotations()) {
    out += "File Name: " + fa.file + "\n";
    const int64_t sod = static_cast<int64_t>(std::llround(fa.start_time)) % 86400;
    char buf[64];
    std::snprintf(buf, sizeof buf, "File Start Time: %02lld:%02lld:%02lld\n",
                  static_cast<long long>(sod / 3600), static_cast<long long>((sod / 60) % 60),
                  static_cast<long long>(sod % 60));
    out += buf;
    out += "Number of Seizures in File: " + std::to_string(fa.seizures.size()) + "\n";
    for (size_t i = 0; i < fa.seizures.size(); ++i) {
      out += "Seizure " + std::to_string(i + 1) +
             " Start Time: " + std::to_string(static_cast<int64_t>(fa.seizures[i].onset_s)) +
             " seconds\n";
      out += "Seizure " + std::to_string(i + 1) +
             " End Time: " + std::to_string(static_cast<int64_t>(fa.seizures[i].offset_s)) +
             " seconds\n";
    }
    out += "\n";
  }
  return out;
}

EEGRecord SynthGenerator::generate_file(int64_t index) {
  if (index != next_file_)
    fail("synth: files must be generated in order (expected " + std::to_string(next_file_) +
         ", got " + std::to_string(index) + ")");
  ++next_file_;
  const int64_t flen = static_cast<int64_t>(profile_.file_len_s);
  const int64_t total_sec = total_samples_ / static_cast<int64_t>(profile_.fs);
  const int64_t sec0 = index * flen;
  const int64_t sec1 = std::min(total_sec, sec0 + flen);
  const int64_t n = (sec1 - sec0) * static_cast<int64_t>(profile_.fs);

  EEGRecord rec;
  rec.fs = profile_.fs;
  rec.start_time = base_time_ + static_cast<double>(sec0);
  rec.channels = canonical_montage();
  rec.data.assign(rec.channels.size(), std::vector<float>(static_cast<size_t>(n)));
  fill_block(sec0 * static_cast<int64_t>(profile_.fs), n, rec.data);
  return rec;
}

SynthOutput write_subject(const SubjectProfile& profile, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  SynthGenerator gen(profile);
  SynthOutput out;
  for (int64_t f = 0; f < gen.n_files(); ++f) {
    EEGRecord rec = gen.generate_file(f);
    char name[64];
    std::snprintf(name, sizeof name, "%s_%02lld.edf", profile.id.c_str(),
                  static_cast<long long>(f + 1));
    const std::string path = dir + "/" + name;
    write_edf(path, rec, -kPhysRange, kPhysRange);
    out.edf_paths.push_back(path);
  }
  out.annotations_path = dir + "/annotations.json";
  {
    std::ofstream f(out.annotations_path, std::ios::trunc);
    f << annotations_to_json(gen.annotations());
  }
  out.summary_path = dir + "/" + profile.id + "-summary.txt";
  {
    std::ofstream f(out.summary_path, std::ios::trunc);
    f << gen.summary_text();
  }
  out.truth_path = dir + "/groundtruth.json";
  {
    std::ofstream f(out.truth_path, std::ios::trunc);
    f << ground_truth_to_json(gen.truth());
  }
  return out;
}

}  // namespace teeg
