#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "teeg/edf.hpp"
#include "teeg/protocol.hpp"

namespace teeg {

// Deterministic synthetic subject: 1/f^alpha noise plus an alpha rhythm per
// channel, a band-limited power drift planted over each pre-ictal window,
// label-independent wideband artifact bursts, and a crude ictal marker.
struct SubjectProfile {
  std::string id = "s01";
  uint64_t seed = 1;
  int n_clusters = 3;
  double lead_in_s = 9000;
  double gap_s = 12600;  // onset-to-onset spacing
  double tail_s = 12000;
  double seizure_dur_s = 60;
  double file_len_s = 3600;
  double fs = 256;

  double noise_rms_uv = 15;
  double noise_exponent = 1.0;  // spectral slope of the baseline noise
  double alpha_hz = 10;
  double alpha_amp_uv = 20;
  double drift_lo_hz = 15;
  double drift_hi_hz = 25;
  double drift_power_ratio = 3.0;  // band power multiple at the window end
  double artifact_rate_per_hour = 2.0;
  double artifact_amp_uv = 150;

  double total_s() const {
    return lead_in_s + gap_s * (n_clusters - 1) + seizure_dur_s + tail_s;
  }
};

// Copy with the artifact rate scaled.
SubjectProfile artifact_profile(const SubjectProfile& base, double rate_multiplier);

struct ArtifactBurst {
  double t = 0;
  double duration = 0;
};

struct GroundTruth {
  std::vector<Seizure> seizures;  // absolute times
  std::vector<std::pair<double, double>> drift_intervals;
  std::vector<ArtifactBurst> artifacts;
};

std::string ground_truth_to_json(const GroundTruth& truth);

// Streaming generator; files must be produced in order.
class SynthGenerator {
 public:
  explicit SynthGenerator(const SubjectProfile& profile);
  ~SynthGenerator();
  SynthGenerator(SynthGenerator&&) noexcept;

  const GroundTruth& truth() const { return truth_; }
  const SubjectProfile& profile() const { return profile_; }
  int64_t n_files() const { return n_files_; }
  double base_time() const { return base_time_; }

  // Per-file seizure annotations (onsets relative to each file).
  std::vector<FileAnnotations> annotations() const;
  std::string summary_text() const;

  // Pre-quantization signal for file `index`; sequential calls only.
  EEGRecord generate_file(int64_t index);

 private:
  struct ChannelState;
  void calibrate();
  void fill_block(int64_t abs_sample0, int64_t n, std::vector<std::vector<float>>& out);

  SubjectProfile profile_;
  GroundTruth truth_;
  int64_t n_files_ = 0;
  int64_t total_samples_ = 0;
  double base_time_ = 0;
  int64_t next_file_ = 0;
  std::vector<double> drift_freqs_;
  std::vector<ChannelState> channels_;
};

struct SynthOutput {
  std::vector<std::string> edf_paths;
  std::string annotations_path;
  std::string summary_path;
  std::string truth_path;
};

// Writes <dir>/<id>_NN.edf, <id>-summary.txt, annotations.json, and
// groundtruth.json.
SynthOutput write_subject(const SubjectProfile& profile, const std::string& dir);

}  // namespace teeg
