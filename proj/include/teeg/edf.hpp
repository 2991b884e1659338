#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace teeg {

struct EdfSignalHeader {
  std::string label;
  std::string transducer;
  std::string phys_dim;
  double phys_min = 0;
  double phys_max = 0;
  int32_t dig_min = 0;
  int32_t dig_max = 0;
  std::string prefilter;
  int64_t samples_per_record = 0;
};

struct EdfHeader {
  std::string version;
  std::string patient;
  std::string recording;
  double start_datetime = 0;  // absolute seconds (days-from-civil epoch)
  int64_t header_bytes = 0;
  int64_t n_records = 0;
  double record_duration_s = 0;
  std::vector<EdfSignalHeader> signals;
};

// Multichannel sampled signal in microvolts; start_time is absolute seconds
// on the same clock as SeizureAnnotation timestamps.
struct EEGRecord {
  std::vector<std::string> channels;
  double fs = 0;
  std::vector<std::vector<float>> data;  // one vector per channel
  double start_time = 0;

  int64_t n_samples() const { return data.empty() ? 0 : static_cast<int64_t>(data[0].size()); }
  double duration_s() const { return fs > 0 ? static_cast<double>(n_samples()) / fs : 0; }
};

struct SeizureSpan {
  double onset_s = 0;   // relative to file start
  double offset_s = 0;  // relative to file start
};

// One EDF file's seizure annotations plus its absolute start time; the
// pipeline's JSON interchange serializes a list of these.
struct FileAnnotations {
  std::string file;
  double start_time = 0;
  std::vector<SeizureSpan> seizures;
};

// Parse a complete EDF file image. Converts digital samples to physical
// units and concatenates records in order.
std::pair<EdfHeader, EEGRecord> parse_edf(std::string_view bytes);
std::pair<EdfHeader, EEGRecord> parse_edf_file(const std::string& path);

// Header block only (no payload validation); cheap duration/label probes.
EdfHeader parse_edf_header(std::string_view bytes);
EdfHeader parse_edf_header_file(const std::string& path);
double edf_duration_s(const EdfHeader& header);

// Fixed 18-channel bipolar montage shared across CHB-MIT subjects.
const std::vector<std::string>& canonical_montage();

// Project onto the given labels, in order. Label matching is
// case-insensitive and whitespace-normalized; missing labels raise an
// error naming every absentee.
EEGRecord select_montage(const EEGRecord& record, const std::vector<std::string>& montage);

// CHB-MIT summary text -> per-file annotations with absolute start times.
// Clock times roll over midnight based on file order.
std::vector<FileAnnotations> parse_summary(const std::string& text);

std::string annotations_to_json(const std::vector<FileAnnotations>& files);
std::vector<FileAnnotations> annotations_from_json(const std::string& json_text);

// Write a record as a standard EDF file (1-second records, 16-bit samples,
// the given physical range). n_samples must be a whole number of seconds.
void write_edf(const std::string& path, const EEGRecord& record, double phys_min,
               double phys_max);

std::string normalize_label(std::string_view s);

}  // namespace teeg
