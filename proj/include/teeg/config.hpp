#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace teeg {

// Flat key=value configuration; flags override file values.
struct Config {
  // training
  double lr = 1e-3;
  int epochs = 100;
  int batch_size = 8;
  int context_segments = 12;
  uint64_t seed = 42;
  double clip_norm = 5;
  int patience = 10;
  int64_t max_seq_per_epoch = 0;
  int workers = 1;
  // model
  int d_model = 64;
  int heads = 4;
  int d_k = 0;        // 0 -> d_model / heads
  int attn_window = 0;  // 0 -> context_segments
  int k_temp = 40;
  int f_temp = 40;
  int f_spat = 40;
  int pool_window = 75;
  int pool_stride = 15;
  bool segment_pooling = true;
  std::string ablation_mode = "full";
  // protocol / alarm
  double val_fraction = 0.2;
  double fpr_cap = 0.5;
  int topk = 8;
  int fusion_window = 12;
  double refractory_s = 1800;
  // synthetic subjects
  int synth_clusters = 3;
  double synth_lead_in_s = 9000;
  double synth_gap_s = 12600;
  double synth_tail_s = 12000;
  double synth_seizure_dur_s = 60;
  double synth_file_len_s = 3600;
  double synth_noise_rms = 15;
  double synth_noise_exponent = 1;
  double synth_alpha_amp = 20;
  double synth_drift_lo = 15;
  double synth_drift_hi = 25;
  double synth_drift_ratio = 3.0;
  double synth_artifact_rate = 2.0;
  double synth_artifact_amp = 150;
};

void config_set(Config& cfg, const std::string& key, const std::string& value);
Config load_config_file(const std::string& path, Config base = {});
// Snapshot of every key, for manifests and reproduction.
std::map<std::string, std::string> config_snapshot(const Config& cfg);

}  // namespace teeg
