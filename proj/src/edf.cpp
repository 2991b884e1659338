#include "teeg/edf.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "teeg/common.hpp"

namespace teeg {

namespace {

// Proleptic Gregorian day count, epoch 1970-01-01 (Howard Hinnant's
// days_from_civil).
int64_t days_from_civil(int64_t y, int64_t m, int64_t d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int64_t yoe = y - era * 400;
  const int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

void civil_from_days(int64_t z, int64_t& y, int64_t& m, int64_t& d) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const int64_t doe = z - era * 146097;
  const int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = yoe + era * 400;
  const int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const int64_t mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string field(std::string_view bytes, size_t off, size_t len) {
  return trim(bytes.substr(off, len));
}

int64_t parse_int_field(std::string_view bytes, size_t off, size_t len, const char* what) {
  std::string s = field(bytes, off, len);
  if (s.empty()) fail(std::string("edf: empty ") + what + " field at byte " + std::to_string(off));
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    fail(std::string("edf: non-numeric ") + what + " field '" + s + "' at byte " +
         std::to_string(off));
  return v;
}

double parse_double_field(std::string_view bytes, size_t off, size_t len, const char* what) {
  std::string s = field(bytes, off, len);
  if (s.empty()) fail(std::string("edf: empty ") + what + " field at byte " + std::to_string(off));
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v))
    fail(std::string("edf: non-numeric ") + what + " field '" + s + "' at byte " +
         std::to_string(off));
  return v;
}

double parse_header_datetime(std::string_view bytes) {
  const std::string date = field(bytes, 168, 8);
  const std::string time = field(bytes, 176, 8);
  int d = 0, mo = 0, yy = 0, h = 0, mi = 0, se = 0;
  if (std::sscanf(date.c_str(), "%2d.%2d.%2d", &d, &mo, &yy) != 3)
    fail("edf: bad start date '" + date + "' at byte 168");
  if (std::sscanf(time.c_str(), "%2d.%2d.%2d", &h, &mi, &se) != 3)
    fail("edf: bad start time '" + time + "' at byte 176");
  const int64_t year = yy >= 85 ? 1900 + yy : 2000 + yy;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 59)
    fail("edf: start datetime out of range '" + date + " " + time + "'");
  return static_cast<double>(days_from_civil(year, mo, d) * 86400 + h * 3600 + mi * 60 + se);
}

}  // namespace

std::string normalize_label(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

EdfHeader parse_edf_header(std::string_view bytes) {
  if (bytes.size() < 256)
    fail("edf: truncated header, file is " + std::to_string(bytes.size()) +
         " bytes, fixed header needs 256");

  EdfHeader h;
  h.version = field(bytes, 0, 8);
  h.patient = field(bytes, 8, 80);
  h.recording = field(bytes, 88, 80);
  h.start_datetime = parse_header_datetime(bytes);
  h.header_bytes = parse_int_field(bytes, 184, 8, "header bytes");
  h.n_records = parse_int_field(bytes, 236, 8, "record count");
  h.record_duration_s = parse_double_field(bytes, 244, 8, "record duration");
  const int64_t n_signals = parse_int_field(bytes, 252, 4, "signal count");

  if (n_signals <= 0) fail("edf: non-positive signal count " + std::to_string(n_signals));
  if (h.n_records == -1) fail("edf: unknown record count (-1); streaming EDF unsupported");
  if (h.n_records < 0) fail("edf: negative record count " + std::to_string(h.n_records));
  if (h.record_duration_s <= 0)
    fail("edf: non-positive record duration " + std::to_string(h.record_duration_s));
  if (h.header_bytes != 256 * (n_signals + 1))
    fail("edf: header byte count " + std::to_string(h.header_bytes) + " does not equal 256*(" +
         std::to_string(n_signals) + "+1)");
  const size_t header_end = static_cast<size_t>(h.header_bytes);
  if (bytes.size() < header_end)
    fail("edf: truncated signal headers, file is " + std::to_string(bytes.size()) +
         " bytes, header needs " + std::to_string(header_end));

  // Signal header block: each field is an array over signals.
  const size_t base = 256;
  const size_t ns = static_cast<size_t>(n_signals);
  auto sig_off = [&](size_t field_off, size_t width, size_t s) {
    return base + field_off * ns + s * width;
  };
  int64_t spr_total = 0;
  for (size_t s = 0; s < ns; ++s) {
    EdfSignalHeader sh;
    sh.label = field(bytes, sig_off(0, 16, s), 16);
    sh.transducer = field(bytes, sig_off(16, 80, s), 80);
    sh.phys_dim = field(bytes, sig_off(96, 8, s), 8);
    sh.phys_min = parse_double_field(bytes, sig_off(104, 8, s), 8, "physical min");
    sh.phys_max = parse_double_field(bytes, sig_off(112, 8, s), 8, "physical max");
    sh.dig_min = static_cast<int32_t>(parse_int_field(bytes, sig_off(120, 8, s), 8, "digital min"));
    sh.dig_max = static_cast<int32_t>(parse_int_field(bytes, sig_off(128, 8, s), 8, "digital max"));
    sh.prefilter = field(bytes, sig_off(136, 80, s), 80);
    sh.samples_per_record =
        parse_int_field(bytes, sig_off(216, 8, s), 8, "samples per record");
    if (sh.dig_max <= sh.dig_min)
      fail("edf: signal " + std::to_string(s) + " digital max " + std::to_string(sh.dig_max) +
           " <= digital min " + std::to_string(sh.dig_min));
    if (sh.phys_max == sh.phys_min)
      fail("edf: signal " + std::to_string(s) + " physical max equals physical min");
    if (sh.samples_per_record <= 0 || sh.samples_per_record > 1000000)
      fail("edf: signal " + std::to_string(s) + " bad samples per record " +
           std::to_string(sh.samples_per_record));
    spr_total += sh.samples_per_record;
    h.signals.push_back(std::move(sh));
  }

  if (h.n_records > (1LL << 40) / std::max<int64_t>(1, spr_total))
    fail("edf: implausible record count " + std::to_string(h.n_records));
  return h;
}

EdfHeader parse_edf_header_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("edf: cannot open " + path);
  std::string head(256, '\0');
  f.read(head.data(), 256);
  if (f.gcount() < 256) fail("edf: truncated header in " + path);
  const int64_t header_bytes = parse_int_field(head, 184, 8, "header bytes");
  if (header_bytes < 256 || header_bytes > (1 << 24))
    fail("edf: implausible header byte count in " + path);
  std::string full(static_cast<size_t>(header_bytes), '\0');
  std::copy(head.begin(), head.end(), full.begin());
  f.read(full.data() + 256, header_bytes - 256);
  if (f.gcount() < header_bytes - 256) fail("edf: truncated signal headers in " + path);
  return parse_edf_header(full);
}

double edf_duration_s(const EdfHeader& header) {
  return static_cast<double>(header.n_records) * header.record_duration_s;
}

std::pair<EdfHeader, EEGRecord> parse_edf(std::string_view bytes) {
  EdfHeader h = parse_edf_header(bytes);
  const size_t ns = h.signals.size();
  const size_t header_end = static_cast<size_t>(h.header_bytes);
  int64_t spr_total = 0;
  for (const EdfSignalHeader& sh : h.signals) spr_total += sh.samples_per_record;
  const size_t expect_payload = static_cast<size_t>(h.n_records) *
                                static_cast<size_t>(spr_total) * 2;
  if (bytes.size() < header_end + expect_payload)
    fail("edf: truncated payload at byte " + std::to_string(bytes.size()) + ", expected " +
         std::to_string(header_end + expect_payload) + " bytes");
  if (bytes.size() > header_end + expect_payload)
    fail("edf: trailing bytes after payload, expected " +
         std::to_string(header_end + expect_payload) + " bytes, file has " +
         std::to_string(bytes.size()));

  const int64_t spr = h.signals[0].samples_per_record;
  for (size_t s = 1; s < ns; ++s)
    if (h.signals[s].samples_per_record != spr)
      fail("edf: mixed per-signal sampling rates unsupported (signal " + std::to_string(s) + ")");

  EEGRecord rec;
  rec.start_time = h.start_datetime;
  rec.fs = static_cast<double>(spr) / h.record_duration_s;
  const int64_t total = h.n_records * spr;
  rec.data.assign(ns, std::vector<float>(static_cast<size_t>(total)));
  for (size_t s = 0; s < ns; ++s) rec.channels.push_back(h.signals[s].label);

  const unsigned char* payload =
      reinterpret_cast<const unsigned char*>(bytes.data()) + header_end;
  for (int64_t r = 0; r < h.n_records; ++r) {
    for (size_t s = 0; s < ns; ++s) {
      const EdfSignalHeader& sh = h.signals[s];
      const double scale = (sh.phys_max - sh.phys_min) /
                           (static_cast<double>(sh.dig_max) - static_cast<double>(sh.dig_min));
      const unsigned char* p = payload + (r * spr_total + static_cast<int64_t>(s) * spr) * 2;
      float* dst = rec.data[s].data() + r * spr;
      for (int64_t i = 0; i < spr; ++i) {
        const int16_t dig = static_cast<int16_t>(static_cast<uint16_t>(p[2 * i]) |
                                                 (static_cast<uint16_t>(p[2 * i + 1]) << 8));
        dst[i] = static_cast<float>((static_cast<double>(dig) - sh.dig_min) * scale + sh.phys_min);
      }
    }
  }
  return {std::move(h), std::move(rec)};
}

std::pair<EdfHeader, EEGRecord> parse_edf_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("edf: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_edf(bytes);
}

const std::vector<std::string>& canonical_montage() {
  static const std::vector<std::string> montage = {
      "FP1-F7", "F7-T7",  "T7-P7",  "P7-O1", "FP1-F3", "F3-C3", "C3-P3", "P3-O1", "FP2-F4",
      "F4-C4",  "C4-P4",  "P4-O2",  "FP2-F8", "F8-T8", "T8-P8", "P8-O2", "FZ-CZ", "CZ-PZ"};
  return montage;
}

EEGRecord select_montage(const EEGRecord& record, const std::vector<std::string>& montage) {
  std::map<std::string, size_t> first_index;
  for (size_t i = 0; i < record.channels.size(); ++i) {
    const std::string key = normalize_label(record.channels[i]);
    if (first_index.count(key)) {
      log_debug("select_montage: duplicate channel label '" + record.channels[i] +
                "', first occurrence wins");
      continue;
    }
    first_index[key] = i;
  }

  std::vector<std::string> missing;
  for (const std::string& want : montage)
    if (!first_index.count(normalize_label(want))) missing.push_back(want);
  if (!missing.empty()) {
    std::string msg = "select_montage: missing channels:";
    for (const std::string& m : missing) msg += " " + m;
    fail(msg);
  }

  EEGRecord out;
  out.fs = record.fs;
  out.start_time = record.start_time;
  for (const std::string& want : montage) {
    const size_t idx = first_index.at(normalize_label(want));
    out.channels.push_back(want);
    out.data.push_back(record.data[idx]);
  }
  return out;
}

std::vector<FileAnnotations> parse_summary(const std::string& text) {
  std::vector<FileAnnotations> files;
  std::istringstream is(text);
  std::string line;
  bool has_block = false;
  FileAnnotations cur;
  bool have_start = false;
  double pending_onset = -1;
  int declared = -1;
  int64_t day_base = 0;
  double prev_abs = -1;

  auto finish_block = [&]() {
    if (!has_block) return;
    if (declared >= 0 && declared != static_cast<int>(cur.seizures.size()))
      fail("summary: file " + cur.file + " declares " + std::to_string(declared) +
           " seizures but lists " + std::to_string(cur.seizures.size()));
    if (pending_onset >= 0)
      fail("summary: file " + cur.file + " has a seizure start without an end");
    if (!have_start) {
      if (!cur.seizures.empty())
        fail("summary: file " + cur.file +
             " contains seizures but no start time (timeline metadata missing)");
      fail("summary: file " + cur.file + " has no start time");
    }
    files.push_back(cur);
  };

  auto after_colon = [](const std::string& s) {
    const size_t p = s.find(':');
    return p == std::string::npos ? std::string() : trim(s.substr(p + 1));
  };

  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.rfind("File Name:", 0) == 0) {
      finish_block();
      cur = FileAnnotations{};
      cur.file = after_colon(t);
      has_block = true;
      have_start = false;
      pending_onset = -1;
      declared = -1;
    } else if (t.rfind("File Start Time:", 0) == 0) {
      if (!has_block) fail("summary: start time before any file block");
      int h = 0, m = 0, s = 0;
      const std::string v = after_colon(line);  // keep inner colons
      if (std::sscanf(v.c_str(), "%d:%d:%d", &h, &m, &s) != 3 || h < 0 || m < 0 || m > 59 ||
          s < 0 || s > 59)
        fail("summary: bad start time '" + v + "' for file " + cur.file);
      double abs = static_cast<double>(day_base) * 86400 + h * 3600 + m * 60 + s;
      while (abs <= prev_abs) {  // files are chronological; clock wrapped
        day_base += 1;
        abs += 86400;
      }
      prev_abs = abs;
      cur.start_time = abs;
      have_start = true;
    } else if (t.rfind("Number of Seizures in File:", 0) == 0) {
      declared = std::atoi(after_colon(t).c_str());
    } else if (t.rfind("Seizure", 0) == 0 && t.find("Start Time:") != std::string::npos) {
      if (!has_block) fail("summary: seizure line before any file block");
      if (pending_onset >= 0) fail("summary: nested seizure start in file " + cur.file);
      pending_onset = std::atof(after_colon(t).c_str());
    } else if (t.rfind("Seizure", 0) == 0 && t.find("End Time:") != std::string::npos) {
      if (pending_onset < 0) fail("summary: seizure end without start in file " + cur.file);
      const double off = std::atof(after_colon(t).c_str());
      if (off <= pending_onset)
        fail("summary: seizure end " + std::to_string(off) + " <= start " +
             std::to_string(pending_onset) + " in file " + cur.file);
      cur.seizures.push_back({pending_onset, off});
      pending_onset = -1;
    }
  }
  finish_block();
  return files;
}

std::string annotations_to_json(const std::vector<FileAnnotations>& files) {
  nlohmann::json arr = nlohmann::json::array();
  for (const FileAnnotations& f : files) {
    nlohmann::json seiz = nlohmann::json::array();
    for (const SeizureSpan& s : f.seizures)
      seiz.push_back({{"onset_s", s.onset_s}, {"offset_s", s.offset_s}});
    arr.push_back({{"file", f.file}, {"start_time", f.start_time}, {"seizures", seiz}});
  }
  return arr.dump(2) + "\n";
}

std::vector<FileAnnotations> annotations_from_json(const std::string& json_text) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(json_text);
  } catch (const std::exception& e) {
    fail(std::string("annotations: bad JSON: ") + e.what());
  }
  if (!arr.is_array()) fail("annotations: expected a JSON array");
  std::vector<FileAnnotations> files;
  for (const auto& item : arr) {
    FileAnnotations f;
    f.file = item.at("file").get<std::string>();
    f.start_time = item.at("start_time").get<double>();
    for (const auto& s : item.at("seizures")) {
      SeizureSpan span{s.at("onset_s").get<double>(), s.at("offset_s").get<double>()};
      if (span.onset_s < 0 || span.offset_s <= span.onset_s)
        fail("annotations: bad seizure span in " + f.file);
      f.seizures.push_back(span);
    }
    files.push_back(std::move(f));
  }
  return files;
}

void write_edf(const std::string& path, const EEGRecord& record, double phys_min,
               double phys_max) {
  if (record.data.empty()) fail("write_edf: record has no channels");
  if (phys_max <= phys_min) fail("write_edf: physical max must exceed min");
  const double fs = record.fs;
  if (fs <= 0 || fs != std::floor(fs)) fail("write_edf: sampling rate must be a positive integer");
  const int64_t spr = static_cast<int64_t>(fs);
  const int64_t total = record.n_samples();
  if (total % spr != 0) fail("write_edf: sample count is not a whole number of seconds");
  const int64_t n_records = total / spr;
  const size_t ns = record.data.size();
  for (const auto& ch : record.data)
    if (static_cast<int64_t>(ch.size()) != total)
      fail("write_edf: channels have differing lengths");

  std::string out;
  auto put = [&](const std::string& s, size_t width) {
    std::string v = s;
    if (v.size() > width) fail("write_edf: field too wide: '" + v + "'");
    v.resize(width, ' ');
    out += v;
  };
  auto put_num = [&](double v, size_t width) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    put(buf, width);
  };
  auto put_int = [&](int64_t v, size_t width) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
    put(buf, width);
  };

  int64_t days = static_cast<int64_t>(std::floor(record.start_time / 86400.0));
  int64_t sod = static_cast<int64_t>(std::llround(record.start_time - days * 86400.0));
  if (sod >= 86400) {
    days += sod / 86400;
    sod %= 86400;
  }
  int64_t y, mo, d;
  civil_from_days(days, y, mo, d);
  char date[16], time[16];
  std::snprintf(date, sizeof date, "%02d.%02d.%02d", static_cast<int>(d), static_cast<int>(mo),
                static_cast<int>(y % 100));
  std::snprintf(time, sizeof time, "%02d.%02d.%02d", static_cast<int>(sod / 3600),
                static_cast<int>((sod / 60) % 60), static_cast<int>(sod % 60));

  put("0", 8);
  put("X X X X", 80);
  put("Startdate " + std::string(date), 80);
  put(date, 8);
  put(time, 8);
  put_int(static_cast<int64_t>(256 * (ns + 1)), 8);
  put("", 44);
  put_int(n_records, 8);
  put("1", 8);
  put_int(static_cast<int64_t>(ns), 4);

  const int32_t dig_min = -32768, dig_max = 32767;
  for (size_t s = 0; s < ns; ++s) put(record.channels[s], 16);
  for (size_t s = 0; s < ns; ++s) put("", 80);
  for (size_t s = 0; s < ns; ++s) put("uV", 8);
  for (size_t s = 0; s < ns; ++s) put_num(phys_min, 8);
  for (size_t s = 0; s < ns; ++s) put_num(phys_max, 8);
  for (size_t s = 0; s < ns; ++s) put_int(dig_min, 8);
  for (size_t s = 0; s < ns; ++s) put_int(dig_max, 8);
  for (size_t s = 0; s < ns; ++s) put("", 80);
  for (size_t s = 0; s < ns; ++s) put_int(spr, 8);
  for (size_t s = 0; s < ns; ++s) put("", 32);

  const double inv_step = (dig_max - dig_min) / (phys_max - phys_min);
  std::vector<char> rec_buf(static_cast<size_t>(ns) * spr * 2);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("write_edf: cannot open for write: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  for (int64_t r = 0; r < n_records; ++r) {
    char* p = rec_buf.data();
    for (size_t s = 0; s < ns; ++s) {
      const float* src = record.data[s].data() + r * spr;
      for (int64_t i = 0; i < spr; ++i) {
        double q = std::llround((static_cast<double>(src[i]) - phys_min) * inv_step) + dig_min;
        q = std::clamp(q, static_cast<double>(dig_min), static_cast<double>(dig_max));
        const int16_t dig = static_cast<int16_t>(q);
        p[0] = static_cast<char>(dig & 0xff);
        p[1] = static_cast<char>((dig >> 8) & 0xff);
        p += 2;
      }
    }
    f.write(rec_buf.data(), static_cast<std::streamsize>(rec_buf.size()));
  }
  if (!f) fail("write_edf: write failed: " + path);
}

}  // namespace teeg
