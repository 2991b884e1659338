#include "teeg/alarm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "teeg/common.hpp"

namespace teeg {

double topk_score(const std::vector<double>& window, int64_t k) {
  const int64_t w = static_cast<int64_t>(window.size());
  if (k < 1 || k > w)
    fail("topk_score: k=" + std::to_string(k) + " outside [1, " + std::to_string(w) + "]");
  std::vector<double> sorted = window;
  std::partial_sort(sorted.begin(), sorted.begin() + k, sorted.end(), std::greater<double>());
  double sum = 0;
  for (int64_t i = 0; i < k; ++i) sum += sorted[static_cast<size_t>(i)];
  return sum / static_cast<double>(k);
}

namespace {

void validate_trace(const ProbabilityTrace& trace) {
  for (size_t i = 0; i < trace.entries.size(); ++i) {
    const TraceEntry& e = trace.entries[i];
    if (e.p < 0 || e.p > 1)
      fail("trace: probability " + std::to_string(e.p) + " outside [0,1] at t=" +
           std::to_string(e.t));
    if (i > 0 && trace.entries[i].t <= trace.entries[i - 1].t)
      fail("trace: timestamps not strictly increasing at index " + std::to_string(i));
  }
}

}  // namespace

std::vector<ScoredPoint> compute_scores(const ProbabilityTrace& trace, int64_t fusion_window,
                                        int64_t top_k) {
  validate_trace(trace);
  if (top_k < 1 || top_k > fusion_window)
    fail("compute_scores: top_k must lie in [1, fusion_window]");
  std::vector<ScoredPoint> scores;
  std::vector<double> window;
  int current_interval = -1;
  for (const TraceEntry& e : trace.entries) {
    if (e.interval_id != current_interval) {
      current_interval = e.interval_id;
      window.clear();
    }
    window.push_back(e.p);
    if (static_cast<int64_t>(window.size()) > fusion_window)
      window.erase(window.begin());
    if (static_cast<int64_t>(window.size()) == fusion_window)
      scores.push_back({e.t, topk_score(window, top_k), e.label});
  }
  return scores;
}

std::vector<AlarmEvent> raise_alarms(const std::vector<ScoredPoint>& scores, double threshold,
                                     double refractory_s) {
  std::vector<AlarmEvent> events;
  double last_event = -1e300;
  for (const ScoredPoint& s : scores) {
    if (s.score <= threshold) continue;
    if (s.t < last_event + refractory_s) continue;
    events.push_back({s.t, s.score, threshold});
    last_event = s.t;
  }
  return events;
}

OperatingPoint evaluate_operating_point(const ProbabilityTrace& trace, double threshold,
                                        int64_t fusion_window, int64_t top_k,
                                        double refractory_s) {
  validate_trace(trace);
  OperatingPoint op;
  for (const TraceEntry& e : trace.entries) {
    if (e.label != 1) continue;
    if (e.p > threshold)
      ++op.tp_seg;
    else
      ++op.fn_seg;
  }
  if (op.tp_seg + op.fn_seg > 0) {
    op.sensitivity_defined = true;
    op.sensitivity =
        static_cast<double>(op.tp_seg) / static_cast<double>(op.tp_seg + op.fn_seg);
  }
  const std::vector<ScoredPoint> scores = compute_scores(trace, fusion_window, top_k);
  for (const AlarmEvent& ev : raise_alarms(scores, threshold, refractory_s)) {
    // An event is a false positive when its trigger lies in inter-ictal time.
    bool interictal = false;
    for (const ScoredPoint& s : scores)
      if (s.t == ev.t) interictal = s.label == 0;
    if (interictal) ++op.n_fp_events;
  }
  op.fpr_per_hour = trace.interictal_hours > 0
                        ? static_cast<double>(op.n_fp_events) / trace.interictal_hours
                        : 0.0;
  return op;
}

std::vector<double> threshold_grid() {
  std::vector<double> grid;
  for (int i = 10; i <= 95; i += 5) grid.push_back(static_cast<double>(i) / 100.0);
  return grid;
}

ThresholdChoice select_threshold(const ProbabilityTrace& val_trace, double fpr_cap,
                                 int64_t fusion_window, int64_t top_k, double refractory_s) {
  bool has_pre = false, has_inter = false;
  for (const TraceEntry& e : val_trace.entries) {
    has_pre = has_pre || e.label == 1;
    has_inter = has_inter || e.label == 0;
  }
  if (!has_pre || !has_inter)
    fail("select_threshold: validation trace must contain both labels");

  ThresholdChoice best_capped, best_any;
  bool found_capped = false, found_any = false;
  for (double tau : threshold_grid()) {
    OperatingPoint op = evaluate_operating_point(val_trace, tau, fusion_window, top_k,
                                                 refractory_s);
    auto better = [&](const ThresholdChoice& cur) {
      if (op.sensitivity != cur.at_threshold.sensitivity)
        return op.sensitivity > cur.at_threshold.sensitivity;
      if (op.fpr_per_hour != cur.at_threshold.fpr_per_hour)
        return op.fpr_per_hour < cur.at_threshold.fpr_per_hour;
      return tau < cur.threshold;
    };
    if (!found_any || better(best_any)) {
      best_any = {tau, false, op};
      found_any = true;
    }
    if (op.fpr_per_hour <= fpr_cap && (!found_capped || better(best_capped))) {
      best_capped = {tau, true, op};
      found_capped = true;
    }
  }
  if (found_capped) return best_capped;
  log_info("select_threshold: no grid threshold meets the FPR cap; falling back to max "
           "sensitivity");
  best_any.fpr_cap_met = false;
  return best_any;
}

EvalReport compute_report(const ProbabilityTrace& test_trace, double threshold,
                          int64_t fusion_window, int64_t top_k, double refractory_s) {
  OperatingPoint op =
      evaluate_operating_point(test_trace, threshold, fusion_window, top_k, refractory_s);
  EvalReport r;
  r.sensitivity_defined = op.sensitivity_defined;
  r.sensitivity = op.sensitivity;
  r.fpr_per_hour = op.fpr_per_hour;
  r.tp_seg = op.tp_seg;
  r.fn_seg = op.fn_seg;
  r.n_fp_events = op.n_fp_events;
  r.interictal_hours = test_trace.interictal_hours;
  r.threshold = threshold;
  return r;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::json j{{"subject", r.subject},
                   {"sensitivity", r.sensitivity_defined ? nlohmann::json(r.sensitivity)
                                                         : nlohmann::json(nullptr)},
                   {"fpr_per_hour", r.fpr_per_hour},
                   {"tp_seg", r.tp_seg},
                   {"fn_seg", r.fn_seg},
                   {"n_fp_events", r.n_fp_events},
                   {"interictal_hours", r.interictal_hours},
                   {"threshold", r.threshold},
                   {"fpr_cap_met", r.fpr_cap_met},
                   {"context", r.context},
                   {"ablation", r.ablation}};
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const std::exception& e) {
    fail(std::string("report: bad JSON: ") + e.what());
  }
  EvalReport r;
  r.subject = j.at("subject").get<std::string>();
  if (!j.at("sensitivity").is_null()) {
    r.sensitivity_defined = true;
    r.sensitivity = j.at("sensitivity").get<double>();
  }
  r.fpr_per_hour = j.at("fpr_per_hour").get<double>();
  r.tp_seg = j.at("tp_seg").get<int64_t>();
  r.fn_seg = j.at("fn_seg").get<int64_t>();
  r.n_fp_events = j.at("n_fp_events").get<int64_t>();
  r.interictal_hours = j.at("interictal_hours").get<double>();
  r.threshold = j.at("threshold").get<double>();
  r.fpr_cap_met = j.at("fpr_cap_met").get<bool>();
  r.context = j.value("context", "");
  r.ablation = j.value("ablation", "");
  return r;
}

std::string report_table(const std::vector<EvalReport>& reports) {
  std::string out = "subject        context  ablation        sensitivity(%)  FPR/h\n";
  for (const EvalReport& r : reports) {
    char buf[160];
    char sens[24];
    if (r.sensitivity_defined)
      std::snprintf(sens, sizeof sens, "%.2f", 100.0 * r.sensitivity);
    else
      std::snprintf(sens, sizeof sens, "n/a");
    std::snprintf(buf, sizeof buf, "%-14s %-8s %-15s %-15s %.4f%s\n", r.subject.c_str(),
                  r.context.c_str(), r.ablation.c_str(), sens, r.fpr_per_hour,
                  r.fpr_cap_met ? "" : "  [fpr cap unmet]");
    out += buf;
  }
  return out;
}

void write_trace_csv(const std::string& path, const ProbabilityTrace& trace) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail("trace: cannot open for write: " + path);
  f << "t_start,p\n";
  for (const TraceEntry& e : trace.entries) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "%.6f,%.17g\n", e.t, e.p);
    f << buf;
  }
  if (!f) fail("trace: write failed: " + path);
}

}  // namespace teeg
