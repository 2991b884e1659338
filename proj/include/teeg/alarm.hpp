#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace teeg {

// One evaluated segment's prediction. interval_id groups contiguous labeled
// intervals; score fusion never crosses an interval boundary.
struct TraceEntry {
  double t = 0;  // absolute seconds, strictly increasing
  double p = 0;
  int label = 0;
  int interval_id = 0;
};

struct ProbabilityTrace {
  std::vector<TraceEntry> entries;
  double interictal_hours = 0;  // total inter-ictal duration of the split
};

// Mean of the K largest probabilities in one fusion window.
double topk_score(const std::vector<double>& window, int64_t k);

struct ScoredPoint {
  double t = 0;
  double score = 0;
  int label = 0;
};

// Sliding fusion over each interval's probabilities; the first W-1
// positions of an interval carry no score.
std::vector<ScoredPoint> compute_scores(const ProbabilityTrace& trace, int64_t fusion_window,
                                        int64_t top_k);

struct AlarmEvent {
  double t = 0;
  double score = 0;
  double threshold = 0;
};

// First-crossing emission with refractory suppression: crossings within
// refractory_s after an emitted event are ignored.
std::vector<AlarmEvent> raise_alarms(const std::vector<ScoredPoint>& scores, double threshold,
                                     double refractory_s = 1800);

struct OperatingPoint {
  bool sensitivity_defined = false;
  double sensitivity = 0;
  double fpr_per_hour = 0;
  int64_t tp_seg = 0, fn_seg = 0, n_fp_events = 0;
};

OperatingPoint evaluate_operating_point(const ProbabilityTrace& trace, double threshold,
                                        int64_t fusion_window, int64_t top_k,
                                        double refractory_s = 1800);

// The patient-specific threshold grid: 0.10 to 0.95 in steps of 0.05.
std::vector<double> threshold_grid();

struct ThresholdChoice {
  double threshold = 0;
  bool fpr_cap_met = true;
  OperatingPoint at_threshold;
};

// Among grid thresholds with validation FPR/h within fpr_cap, maximize
// segment sensitivity; ties break to lower FPR/h then lower threshold. If
// no threshold meets the cap, fall back to pure max sensitivity and flag it.
ThresholdChoice select_threshold(const ProbabilityTrace& val_trace, double fpr_cap,
                                 int64_t fusion_window, int64_t top_k,
                                 double refractory_s = 1800);

struct EvalReport {
  std::string subject;
  bool sensitivity_defined = false;
  double sensitivity = 0;
  double fpr_per_hour = 0;
  int64_t tp_seg = 0, fn_seg = 0, n_fp_events = 0;
  double interictal_hours = 0;
  double threshold = 0;
  bool fpr_cap_met = true;
  std::string context;   // e.g. "12"
  std::string ablation;  // e.g. "full"
};

// Segment sensitivity from raw p > threshold over pre-ictal segments;
// FPR/h from refractory-merged alarms triggered in inter-ictal time.
EvalReport compute_report(const ProbabilityTrace& test_trace, double threshold,
                          int64_t fusion_window, int64_t top_k, double refractory_s = 1800);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& json_text);
// Fixed-column table row: subject, sensitivity %, FPR/h at 4 decimals.
std::string report_table(const std::vector<EvalReport>& reports);

void write_trace_csv(const std::string& path, const ProbabilityTrace& trace);

}  // namespace teeg
