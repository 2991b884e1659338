#include "teeg/signal.hpp"

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "teeg/common.hpp"

namespace teeg {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::complex<double> biquad_response(const Biquad& q, double theta) {
  const std::complex<double> z1 = std::polar(1.0, -theta);
  const std::complex<double> z2 = z1 * z1;
  return (q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2);
}

void check_stable(const Biquad& q, const char* what) {
  // Poles of 1 + a1 z^-1 + a2 z^-2: product is a2, so |a2| < 1 is necessary;
  // with the discriminant both roots are checked explicitly.
  const std::complex<double> disc = std::sqrt(std::complex<double>(q.a1 * q.a1 - 4 * q.a2, 0));
  const std::complex<double> r1 = (-q.a1 + disc) / 2.0;
  const std::complex<double> r2 = (-q.a1 - disc) / 2.0;
  if (std::abs(r1) >= 1.0 || std::abs(r2) >= 1.0)
    fail(std::string("design_filters: unstable ") + what + " section");
  if (!std::isfinite(q.b0) || !std::isfinite(q.b1) || !std::isfinite(q.b2) ||
      !std::isfinite(q.a1) || !std::isfinite(q.a2))
    fail(std::string("design_filters: non-finite ") + what + " coefficients");
}

Biquad design_notch(double fs, double f0, double q_factor) {
  const double w0 = 2 * kPi * f0 / fs;
  const double alpha = std::sin(w0) / (2 * q_factor);
  const double c = std::cos(w0);
  const double a0 = 1 + alpha;
  Biquad q;
  q.b0 = 1 / a0;
  q.b1 = -2 * c / a0;
  q.b2 = 1 / a0;
  q.a1 = -2 * c / a0;
  q.a2 = (1 - alpha) / a0;
  return q;
}

std::vector<Biquad> design_butter_bandpass(double fs, double lo, double hi) {
  // Second-order low-pass prototype -> fourth-order band-pass, two sections.
  const double wl = std::tan(kPi * lo / fs);
  const double wu = std::tan(kPi * hi / fs);
  const double w0sq = wl * wu;
  const double bw = wu - wl;

  // Upper-half-plane prototype pole; the conjugate pair is implicit.
  const std::complex<double> proto(-std::sqrt(0.5), std::sqrt(0.5));
  // s^2 - bw*p*s + w0^2 = 0
  const std::complex<double> bp = bw * proto;
  const std::complex<double> disc = std::sqrt(bp * bp - 4.0 * w0sq);
  const std::complex<double> s_a = (bp + disc) / 2.0;
  const std::complex<double> s_b = (bp - disc) / 2.0;

  const double theta_c = 2 * std::atan(std::sqrt(w0sq));
  std::vector<Biquad> sections;
  for (const std::complex<double>& s : {s_a, s_b}) {
    const std::complex<double> z = (1.0 + s) / (1.0 - s);
    Biquad q;
    q.a1 = -2 * z.real();
    q.a2 = std::norm(z);
    q.b0 = 1;
    q.b1 = 0;
    q.b2 = -1;
    const double mag = std::abs(biquad_response(q, theta_c));
    q.b0 = 1 / mag;
    q.b2 = -1 / mag;
    sections.push_back(q);
  }
  return sections;
}

}  // namespace

FilterBank design_filters(double fs, const SignalConfig& cfg) {
  if (fs <= 200)
    fail("design_filters: sampling rate " + std::to_string(fs) +
         " too low, Nyquist must exceed 100 Hz");
  FilterBank bank;
  bank.fs = fs;
  bank.notch = design_notch(fs, cfg.notch_hz, cfg.notch_q);
  bank.bandpass = design_butter_bandpass(fs, cfg.band_lo_hz, cfg.band_hi_hz);
  check_stable(bank.notch, "notch");
  for (const Biquad& q : bank.bandpass) check_stable(q, "band-pass");
  return bank;
}

void apply_filters_streaming(const FilterBank& bank, const float* in, float* out, int64_t n,
                             ChannelFilterState& state) {
  const std::vector<Biquad> sections = bank.all_sections();
  if (state.stages.empty()) state.stages.assign(sections.size(), BiquadState{});
  if (state.stages.size() != sections.size())
    fail("apply_filters: filter state does not match bank");
  for (int64_t i = 0; i < n; ++i) {
    double x = static_cast<double>(in[i]);
    for (size_t s = 0; s < sections.size(); ++s) {
      const Biquad& q = sections[s];
      BiquadState& st = state.stages[s];
      const double y = q.b0 * x + st.z1;
      st.z1 = q.b1 * x - q.a1 * y + st.z2;
      st.z2 = q.b2 * x - q.a2 * y;
      x = y;
    }
    out[i] = static_cast<float>(x);
  }
}

EEGRecord apply_filters(const EEGRecord& record, const FilterBank& bank) {
  if (record.fs != bank.fs)
    fail("apply_filters: record fs " + std::to_string(record.fs) + " does not match bank fs " +
         std::to_string(bank.fs));
  EEGRecord out;
  out.channels = record.channels;
  out.fs = record.fs;
  out.start_time = record.start_time;
  out.data.resize(record.data.size());
  for (size_t c = 0; c < record.data.size(); ++c) {
    out.data[c].resize(record.data[c].size());
    ChannelFilterState state;
    apply_filters_streaming(bank, record.data[c].data(), out.data[c].data(),
                            static_cast<int64_t>(record.data[c].size()), state);
  }
  return out;
}

std::vector<LabeledSegment> segment(const EEGRecord& record, const IntervalMap& map, Phase phase,
                                    const std::string& subject_id, double window_s) {
  std::vector<LabeledSegment> segments;
  if (record.data.empty()) return segments;
  const int64_t win = static_cast<int64_t>(std::llround(window_s * record.fs));
  const int64_t total = record.n_samples();
  if (total < win) return segments;
  const double rec_t0 = record.start_time;
  const double rec_t1 = record.start_time + record.duration_s();
  const int64_t channels = static_cast<int64_t>(record.data.size());

  for (const LabeledInterval& iv : map.intervals) {
    if (iv.label == IntervalLabel::kExcluded) continue;
    const double stride =
        (iv.label == IntervalLabel::kPreictal && phase == Phase::kTrain) ? window_s / 2
                                                                         : window_s;
    if (iv.t1 <= rec_t0 || iv.t0 >= rec_t1) continue;
    // Window grid is anchored at the interval start; skip whole windows
    // that fall before the recording.
    int64_t k = 0;
    if (iv.t0 < rec_t0) k = static_cast<int64_t>(std::ceil((rec_t0 - iv.t0) / stride - 1e-9));
    for (;; ++k) {
      const double t = iv.t0 + static_cast<double>(k) * stride;
      if (t + window_s > iv.t1 + 1e-9) break;
      if (t + window_s > rec_t1 + 1e-9) break;
      if (t < rec_t0 - 1e-9) continue;
      const int64_t s0 = static_cast<int64_t>(std::llround((t - rec_t0) * record.fs));
      if (s0 < 0 || s0 + win > total) break;
      LabeledSegment seg;
      seg.channels = channels;
      seg.samples = win;
      seg.t_start = t;
      seg.label = iv.label == IntervalLabel::kPreictal ? 1 : 0;
      seg.subject_id = subject_id;
      seg.data.resize(static_cast<size_t>(channels * win));
      for (int64_t c = 0; c < channels; ++c)
        std::memcpy(seg.data.data() + c * win, record.data[c].data() + s0,
                    static_cast<size_t>(win) * sizeof(float));
      segments.push_back(std::move(seg));
    }
  }
  return segments;
}

namespace {
constexpr char kSegMagic[] = "TSEG1";

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& f, const std::string& path) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) fail("segment cache: truncated read from " + path);
  return v;
}
}  // namespace

void write_segment_cache(const std::string& path, const std::vector<LabeledSegment>& segments) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("segment cache: cannot open for write: " + path);
  f.write(kSegMagic, 5);
  const int64_t channels = segments.empty() ? 0 : segments[0].channels;
  const int64_t samples = segments.empty() ? 0 : segments[0].samples;
  put<uint32_t>(f, static_cast<uint32_t>(channels));
  put<uint32_t>(f, static_cast<uint32_t>(samples));
  for (const LabeledSegment& s : segments) {
    if (s.channels != channels || s.samples != samples)
      fail("segment cache: mixed segment shapes");
    put<uint16_t>(f, static_cast<uint16_t>(s.subject_id.size()));
    f.write(s.subject_id.data(), static_cast<std::streamsize>(s.subject_id.size()));
    put<double>(f, s.t_start);
    put<uint8_t>(f, static_cast<uint8_t>(s.label));
    f.write(reinterpret_cast<const char*>(s.data.data()),
            static_cast<std::streamsize>(s.data.size() * sizeof(float)));
  }
  if (!f) fail("segment cache: write failed: " + path);
}

std::vector<LabeledSegment> read_segment_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("segment cache: cannot open: " + path);
  char magic[5];
  f.read(magic, 5);
  if (!f || std::memcmp(magic, kSegMagic, 5) != 0)
    fail("segment cache: unknown magic in " + path);
  const uint32_t channels = take<uint32_t>(f, path);
  const uint32_t samples = take<uint32_t>(f, path);
  std::vector<LabeledSegment> segments;
  while (f.peek() != EOF) {
    LabeledSegment s;
    const uint16_t name_len = take<uint16_t>(f, path);
    s.subject_id.resize(name_len);
    f.read(s.subject_id.data(), name_len);
    s.t_start = take<double>(f, path);
    s.label = take<uint8_t>(f, path);
    s.channels = channels;
    s.samples = samples;
    s.data.resize(static_cast<size_t>(channels) * samples);
    f.read(reinterpret_cast<char*>(s.data.data()),
           static_cast<std::streamsize>(s.data.size() * sizeof(float)));
    if (!f) fail("segment cache: truncated record in " + path);
    segments.push_back(std::move(s));
  }
  return segments;
}

}  // namespace teeg
