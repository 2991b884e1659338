#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "doctest.h"
#include "teeg/common.hpp"
#include "teeg/edf.hpp"

using namespace teeg;

namespace {

std::string pad(const std::string& s, size_t w) {
  std::string v = s;
  v.resize(w, ' ');
  return v;
}

// Hand-assembled EDF image, built independently of write_edf: 2 signals,
// 1 record of 4 samples each, 1-second records.
std::string tiny_edf(const std::vector<int16_t>& s0, const std::vector<int16_t>& s1,
                     const std::string& date = "02.01.24") {
  std::string h;
  h += pad("0", 8);
  h += pad("patient", 80);
  h += pad("recording", 80);
  h += pad(date, 8);
  h += pad("08.30.00", 8);
  h += pad("768", 8);  // 256*(2+1)
  h += pad("", 44);
  h += pad("1", 8);  // n_records
  h += pad("1", 8);  // duration
  h += pad("2", 4);  // n_signals
  h += pad("C3", 16) + pad("C4", 16);
  h += pad("", 80) + pad("", 80);
  h += pad("uV", 8) + pad("uV", 8);
  h += pad("-100", 8) + pad("-100", 8);
  h += pad("100", 8) + pad("100", 8);
  h += pad("-32768", 8) + pad("-32768", 8);
  h += pad("32767", 8) + pad("32767", 8);
  h += pad("", 80) + pad("", 80);
  h += pad("4", 8) + pad("4", 8);
  h += pad("", 32) + pad("", 32);
  auto put16 = [&](int16_t v) {
    h.push_back(static_cast<char>(v & 0xff));
    h.push_back(static_cast<char>((v >> 8) & 0xff));
  };
  for (int16_t v : s0) put16(v);
  for (int16_t v : s1) put16(v);
  return h;
}

}  // namespace

TEST_CASE("parse_edf recovers a hand-assembled file exactly") {
  const std::string bytes = tiny_edf({0, 16384, -16384, 32767}, {100, -100, 0, -32768});
  auto [header, rec] = parse_edf(bytes);
  CHECK(header.n_records == 1);
  CHECK(header.signals.size() == 2);
  CHECK(rec.fs == doctest::Approx(4.0));  // 4 samples per 1-second record
  CHECK(rec.channels[0] == "C3");
  CHECK(rec.channels[1] == "C4");
  // phys = (dig + 32768) * 200 / 65535 - 100, evaluated by hand.
  auto phys = [](double dig) { return (dig + 32768.0) * 200.0 / 65535.0 - 100.0; };
  const std::vector<int16_t> s0 = {0, 16384, -16384, 32767};
  const std::vector<int16_t> s1 = {100, -100, 0, -32768};
  for (int i = 0; i < 4; ++i) {
    CHECK(rec.data[0][i] == doctest::Approx(phys(s0[i])).epsilon(1e-6));
    CHECK(rec.data[1][i] == doctest::Approx(phys(s1[i])).epsilon(1e-6));
  }
  // Start datetime arithmetic: 02.01.24 is exactly one day after 01.01.24.
  auto earlier = parse_edf(tiny_edf({0, 0, 0, 0}, {0, 0, 0, 0}, "01.01.24"));
  CHECK(rec.start_time - earlier.second.start_time == 86400.0);
}

TEST_CASE("digital zero maps to half a quantization step") {
  const std::string bytes = tiny_edf({0, 0, 0, 0}, {0, 0, 0, 0});
  auto [header, rec] = parse_edf(bytes);
  // (0 - (-32768)) * 200/65535 - 100 = 100/65535 = half of one step.
  CHECK(std::fabs(rec.data[0][0] - 100.0 / 65535.0) < 1e-9);
}

TEST_CASE("a 100-byte file is a truncated-header error") {
  CHECK_THROWS_WITH_AS(parse_edf(std::string(100, 'x')), doctest::Contains("truncated header"),
                       Error);
}

TEST_CASE("payload truncation and trailing bytes are errors with offsets") {
  std::string bytes = tiny_edf({1, 2, 3, 4}, {5, 6, 7, 8});
  CHECK_THROWS_WITH_AS(parse_edf(std::string(bytes).erase(bytes.size() - 3)),
                       doctest::Contains("truncated payload"), Error);
  CHECK_THROWS_AS(parse_edf(bytes + "zz"), Error);
}

TEST_CASE("streaming record count and junk numeric fields are rejected") {
  std::string bytes = tiny_edf({1, 2, 3, 4}, {5, 6, 7, 8});
  std::string streaming = bytes;
  streaming.replace(236, 8, pad("-1", 8));
  CHECK_THROWS_WITH_AS(parse_edf(streaming), doctest::Contains("streaming"), Error);
  std::string junk = bytes;
  junk.replace(252, 4, pad("ab", 4));
  CHECK_THROWS_WITH_AS(parse_edf(junk), doctest::Contains("non-numeric"), Error);
}

TEST_CASE("montage selection projects a superset into canonical order") {
  EEGRecord rec;
  rec.fs = 256;
  // Superset with shuffled order, padded labels, and one duplicate.
  std::vector<std::string> labels = {"EKG",   "cz-pz", "FP1-F7", "F7-T7", "T7-P7",  "P7-O1",
                                     "FP1-F3", "F3-C3", "C3-P3",  "P3-O1", "FP2-F4", "F4-C4",
                                     "C4-P4",  "P4-O2", "FP2-F8", "F8-T8", "T8-P8",  "P8-O2",
                                     "FZ-CZ ", "VNS",   "FZ-CZ"};
  for (size_t i = 0; i < labels.size(); ++i) {
    rec.channels.push_back(labels[i]);
    rec.data.push_back(std::vector<float>(10, static_cast<float>(i)));
  }
  EEGRecord out = select_montage(rec, canonical_montage());
  REQUIRE(out.channels.size() == 18);
  CHECK(out.channels == canonical_montage());
  // Pure permutation/projection: each output row equals its source row.
  for (size_t i = 0; i < 18; ++i) {
    const std::string want = normalize_label(out.channels[i]);
    size_t src = labels.size();
    for (size_t j = 0; j < labels.size(); ++j)
      if (normalize_label(labels[j]) == want) {
        src = j;
        break;
      }
    REQUIRE(src < labels.size());
    CHECK(out.data[i] == rec.data[src]);
  }
}

TEST_CASE("montage selection of an exact match is the identity") {
  EEGRecord rec;
  rec.fs = 256;
  for (size_t i = 0; i < canonical_montage().size(); ++i) {
    rec.channels.push_back(canonical_montage()[i]);
    rec.data.push_back(std::vector<float>(5, static_cast<float>(i)));
  }
  EEGRecord out = select_montage(rec, canonical_montage());
  CHECK(out.channels == rec.channels);
  CHECK(out.data == rec.data);
}

TEST_CASE("missing montage channel error names the absentee") {
  EEGRecord rec;
  rec.fs = 256;
  for (const std::string& ch : canonical_montage())
    if (ch != "FZ-CZ") {
      rec.channels.push_back(ch);
      rec.data.push_back(std::vector<float>(5, 0.f));
    }
  CHECK_THROWS_WITH_AS(select_montage(rec, canonical_montage()), doctest::Contains("FZ-CZ"),
                       Error);
}

TEST_CASE("summary parser extracts seizures and absolute times") {
  const std::string text =
      "Data Sampling Rate: 256 Hz\n"
      "\n"
      "File Name: chb01_01.edf\n"
      "File Start Time: 11:42:54\n"
      "File End Time: 12:42:54\n"
      "Number of Seizures in File: 0\n"
      "\n"
      "File Name: chb01_03.edf\n"
      "File Start Time: 12:42:54\n"
      "File End Time: 13:42:54\n"
      "Number of Seizures in File: 1\n"
      "Seizure Start Time: 2996 seconds\n"
      "Seizure End Time: 3036 seconds\n";
  auto files = parse_summary(text);
  REQUIRE(files.size() == 2);
  CHECK(files[0].seizures.empty());
  CHECK(files[0].start_time == 11 * 3600 + 42 * 60 + 54);
  REQUIRE(files[1].seizures.size() == 1);
  CHECK(files[1].seizures[0].onset_s == 2996);
  CHECK(files[1].seizures[0].offset_s == 3036);
  // Two files one hour apart: absolute onsets differ by 3600 s plus the
  // difference of relative offsets.
  const std::string two =
      "File Name: a.edf\nFile Start Time: 10:00:00\nNumber of Seizures in File: 1\n"
      "Seizure Start Time: 100 seconds\nSeizure End Time: 160 seconds\n"
      "File Name: b.edf\nFile Start Time: 11:00:00\nNumber of Seizures in File: 1\n"
      "Seizure Start Time: 250 seconds\nSeizure End Time: 300 seconds\n";
  auto two_files = parse_summary(two);
  const double abs0 = two_files[0].start_time + two_files[0].seizures[0].onset_s;
  const double abs1 = two_files[1].start_time + two_files[1].seizures[0].onset_s;
  CHECK(abs1 - abs0 == 3600 + (250 - 100));
}

TEST_CASE("summary parser handles chb-style numbered seizures and midnight rollover") {
  const std::string text =
      "File Name: chb15_01.edf\nFile Start Time: 23:30:00\nNumber of Seizures in File: 2\n"
      "Seizure 1 Start Time: 10 seconds\nSeizure 1 End Time: 30 seconds\n"
      "Seizure 2 Start Time: 90 seconds\nSeizure 2 End Time: 120 seconds\n"
      "File Name: chb15_02.edf\nFile Start Time: 00:30:00\nNumber of Seizures in File: 0\n";
  auto files = parse_summary(text);
  REQUIRE(files.size() == 2);
  CHECK(files[0].seizures.size() == 2);
  CHECK(files[1].start_time - files[0].start_time == 3600);
}

TEST_CASE("summary errors: end before start, missing metadata") {
  CHECK_THROWS_AS(parse_summary("File Name: x.edf\nFile Start Time: 10:00:00\n"
                                "Number of Seizures in File: 1\n"
                                "Seizure Start Time: 50 seconds\nSeizure End Time: 40 seconds\n"),
                  Error);
  CHECK_THROWS_WITH_AS(parse_summary("File Name: x.edf\nNumber of Seizures in File: 1\n"
                                     "Seizure Start Time: 50 seconds\n"
                                     "Seizure End Time: 90 seconds\n"),
                       doctest::Contains("timeline metadata"), Error);
}

TEST_CASE("annotations JSON round-trips") {
  std::vector<FileAnnotations> files(2);
  files[0].file = "a.edf";
  files[0].start_time = 100;
  files[0].seizures = {{10, 60}};
  files[1].file = "b.edf";
  files[1].start_time = 3700;
  auto back = annotations_from_json(annotations_to_json(files));
  REQUIRE(back.size() == 2);
  CHECK(back[0].seizures.size() == 1);
  CHECK(back[0].seizures[0].offset_s == 60);
  CHECK(back[1].start_time == 3700);
  CHECK_THROWS_AS(annotations_from_json("{not json"), Error);
}

TEST_CASE("EDF write and reparse stays within one quantization step") {
  std::mt19937 rng(41);
  std::uniform_real_distribution<float> amp(-900.f, 900.f);
  const double pmin = -1000, pmax = 1000;
  const double step = (pmax - pmin) / 65535.0;
  for (int rep = 0; rep < 5; ++rep) {
    EEGRecord rec;
    rec.fs = 64;
    rec.start_time = 86400.0 * 19000 + 3600.0 * rep;
    const int64_t n = 64 * 3;
    for (int c = 0; c < 4; ++c) {
      rec.channels.push_back("CH" + std::to_string(c));
      std::vector<float> v(n);
      for (auto& x : v) x = amp(rng);
      rec.data.push_back(std::move(v));
    }
    const std::string path = "/tmp/teeg_roundtrip_" + std::to_string(rep) + ".edf";
    write_edf(path, rec, pmin, pmax);
    auto [header, back] = parse_edf_file(path);
    REQUIRE(back.n_samples() == n);
    CHECK(back.start_time == rec.start_time);
    CHECK(back.fs == rec.fs);
    double max_err = 0;
    for (int c = 0; c < 4; ++c)
      for (int64_t i = 0; i < n; ++i)
        max_err = std::max(max_err,
                           std::fabs(static_cast<double>(back.data[c][i]) - rec.data[c][i]));
    CHECK(max_err <= step);
  }
}

TEST_CASE("parser is total over random and mutated inputs") {
  std::mt19937 rng(43);
  const std::string valid = tiny_edf({1, 2, 3, 4}, {5, 6, 7, 8});
  std::uniform_int_distribution<int> len_dist(0, 2048);
  std::uniform_int_distribution<int> byte_dist(0, 255);
  for (int rep = 0; rep < 500; ++rep) {
    std::string bytes;
    if (rep % 2 == 0) {
      bytes.resize(static_cast<size_t>(len_dist(rng)));
      for (auto& c : bytes) c = static_cast<char>(byte_dist(rng));
    } else {
      bytes = valid;
      std::uniform_int_distribution<size_t> pos(0, bytes.size() - 1);
      for (int k = 0; k < 8; ++k) bytes[pos(rng)] = static_cast<char>(byte_dist(rng));
    }
    try {
      parse_edf(bytes);
    } catch (const Error&) {
      // structured failure is the accepted outcome
    }
  }
  CHECK(true);
}
