#include "teeg/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <vector>

#include "teeg/common.hpp"

namespace teeg {

namespace {

struct Key {
  const char* name;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& v, const char* key) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size())
    fail(std::string("config: bad numeric value '") + v + "' for key " + key);
  return x;
}

int64_t to_int(const std::string& v, const char* key) {
  int64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(std::string("config: bad integer value '") + v + "' for key " + key);
  return x;
}

bool to_bool(const std::string& v, const char* key) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  fail(std::string("config: bad boolean value '") + v + "' for key " + key);
}

#define TEEG_DKEY(field) \
  {#field, [](Config& c, const std::string& v) { c.field = to_double(v, #field); }, \
   [](const Config& c) { return fmt_double(c.field); }}
#define TEEG_IKEY(field) \
  {#field, [](Config& c, const std::string& v) { c.field = static_cast<decltype(c.field)>(to_int(v, #field)); }, \
   [](const Config& c) { return std::to_string(c.field); }}
#define TEEG_BKEY(field) \
  {#field, [](Config& c, const std::string& v) { c.field = to_bool(v, #field); }, \
   [](const Config& c) { return std::string(c.field ? "true" : "false"); }}
#define TEEG_SKEY(field) \
  {#field, [](Config& c, const std::string& v) { c.field = v; }, \
   [](const Config& c) { return c.field; }}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      TEEG_DKEY(lr),
      TEEG_IKEY(epochs),
      TEEG_IKEY(batch_size),
      TEEG_IKEY(context_segments),
      TEEG_IKEY(seed),
      TEEG_DKEY(clip_norm),
      TEEG_IKEY(patience),
      TEEG_IKEY(max_seq_per_epoch),
      TEEG_IKEY(workers),
      TEEG_IKEY(d_model),
      TEEG_IKEY(heads),
      TEEG_IKEY(d_k),
      TEEG_IKEY(attn_window),
      TEEG_IKEY(k_temp),
      TEEG_IKEY(f_temp),
      TEEG_IKEY(f_spat),
      TEEG_IKEY(pool_window),
      TEEG_IKEY(pool_stride),
      TEEG_BKEY(segment_pooling),
      TEEG_SKEY(ablation_mode),
      TEEG_DKEY(val_fraction),
      TEEG_DKEY(fpr_cap),
      TEEG_IKEY(topk),
      TEEG_IKEY(fusion_window),
      TEEG_DKEY(refractory_s),
      TEEG_IKEY(synth_clusters),
      TEEG_DKEY(synth_lead_in_s),
      TEEG_DKEY(synth_gap_s),
      TEEG_DKEY(synth_tail_s),
      TEEG_DKEY(synth_seizure_dur_s),
      TEEG_DKEY(synth_file_len_s),
      TEEG_DKEY(synth_noise_rms),
      TEEG_DKEY(synth_noise_exponent),
      TEEG_DKEY(synth_alpha_amp),
      TEEG_DKEY(synth_drift_lo),
      TEEG_DKEY(synth_drift_hi),
      TEEG_DKEY(synth_drift_ratio),
      TEEG_DKEY(synth_artifact_rate),
      TEEG_DKEY(synth_artifact_amp),
  };
  return k;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  size_t e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

void config_set(Config& cfg, const std::string& key, const std::string& value) {
  for (const Key& k : keys()) {
    if (key == k.name) {
      k.set(cfg, value);
      return;
    }
  }
  fail("config: unknown key '" + key + "'");
}

Config load_config_file(const std::string& path, Config base) {
  std::ifstream f(path);
  if (!f) fail("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail("config: line " + std::to_string(lineno) + " of " + path + " is not key=value");
    config_set(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return base;
}

std::map<std::string, std::string> config_snapshot(const Config& cfg) {
  std::map<std::string, std::string> out;
  for (const Key& k : keys()) out[k.name] = k.get(cfg);
  return out;
}

}  // namespace teeg
