#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "teeg/edf.hpp"
#include "teeg/protocol.hpp"

namespace teeg {

// One second-order section, direct form II transposed.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

struct BiquadState {
  double z1 = 0, z2 = 0;
};

struct FilterBank {
  double fs = 0;
  Biquad notch;
  std::vector<Biquad> bandpass;  // cascaded sections

  std::vector<Biquad> all_sections() const {
    std::vector<Biquad> s{notch};
    s.insert(s.end(), bandpass.begin(), bandpass.end());
    return s;
  }
};

struct SignalConfig {
  double notch_hz = 60;
  double notch_q = 20;
  double band_lo_hz = 0.5;
  double band_hi_hz = 100;
};

// 60 Hz notch (quality factor Q) plus a 4th-order Butterworth band-pass
// realized as two cascaded biquads, designed by bilinear transform with
// frequency prewarping. Poles are verified strictly inside the unit circle.
FilterBank design_filters(double fs, const SignalConfig& cfg = {});

// Causal per-channel application; output length equals input length.
EEGRecord apply_filters(const EEGRecord& record, const FilterBank& bank);

// Streaming form for file-by-file processing: state persists across calls.
struct ChannelFilterState {
  std::vector<BiquadState> stages;
};
void apply_filters_streaming(const FilterBank& bank, const float* in, float* out, int64_t n,
                             ChannelFilterState& state);

struct LabeledSegment {
  std::vector<float> data;  // channels x samples, row-major
  int64_t channels = 0;
  int64_t samples = 0;
  double t_start = 0;
  int label = 0;  // 1 = preictal, 0 = interictal
  std::string subject_id;
};

enum class Phase { kTrain, kEval };

// 5-second windows. Pre-ictal training windows use 50% overlap (2.5 s
// stride); everything else strides by the full window. Windows that would
// cross an interval boundary or run past the recording are dropped whole.
std::vector<LabeledSegment> segment(const EEGRecord& record, const IntervalMap& map, Phase phase,
                                    const std::string& subject_id = "", double window_s = 5.0);

// Optional segment cache ("TSEG1"): u32 channels, u32 samples, then per
// record u16 subject length + bytes, f64 t_start, u8 label, f32 payload.
void write_segment_cache(const std::string& path, const std::vector<LabeledSegment>& segments);
std::vector<LabeledSegment> read_segment_cache(const std::string& path);

}  // namespace teeg
