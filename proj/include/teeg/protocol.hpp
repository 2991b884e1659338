#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace teeg {

struct Seizure {
  double onset = 0;   // absolute seconds
  double offset = 0;  // absolute seconds
};

struct SeizureCluster {
  double lead_onset = 0;
  double end = 0;  // offset of the last member
  std::vector<Seizure> members;
  // A cluster is valid when its clipped pre-ictal window is long enough to
  // train on; invalid clusters keep their exclusion zones but contribute no
  // pre-ictal label and do not count toward eligibility.
  bool valid = true;
  double preictal_coverage_s = 0;
};

enum class IntervalLabel : uint8_t { kInterictal = 0, kPreictal = 1, kExcluded = 2 };

struct LabeledInterval {
  IntervalLabel label;
  double t0 = 0;
  double t1 = 0;  // half-open [t0, t1)
  double duration() const { return t1 - t0; }
};

// Ordered, non-overlapping labeling of the subject's recorded timeline.
struct IntervalMap {
  std::vector<LabeledInterval> intervals;
  IntervalLabel at(double t) const;  // excluded outside coverage
};

struct RecordingExtent {
  double t0 = 0;
  double t1 = 0;
};

struct ProtocolConfig {
  double cluster_gap_s = 1800;   // < 30 min between seizures joins a cluster
  double preictal_lead_s = 2100; // window opens 35 min before lead onset
  double sph_s = 300;            // final 5 min before onset, excluded
  double margin_s = 5400;        // 1.5 h safety margin around a cluster
  double min_preictal_s = 600;   // clipped windows shorter than this drop the cluster
  bool gap_from_offset = true;   // measure cluster gap offset->next onset
};

// Greedy left-to-right grouping of onset-sorted seizures.
std::vector<SeizureCluster> cluster_seizures(const std::vector<Seizure>& seizures,
                                             const ProtocolConfig& cfg = {});

// Label every recorded second. Also decides cluster validity (clipped
// pre-ictal coverage) and fills it into `clusters`.
IntervalMap build_interval_map(std::vector<SeizureCluster>& clusters,
                               const std::vector<RecordingExtent>& extents,
                               const ProtocolConfig& cfg = {});

struct Eligibility {
  bool include = true;
  std::string reason;  // empty when included
};

Eligibility check_eligibility(bool montage_ok, bool timeline_ok, int n_valid_clusters);

struct SplitPlan {
  std::vector<LabeledInterval> train;
  std::vector<LabeledInterval> val;
  std::vector<LabeledInterval> test;
  double t_split = 0;  // end of the (N-1)-th cluster's safety zone
};

// First N-1 valid clusters train, last cluster tests; validation is the
// chronological tail of the training span (falling back to per-label tails
// when the time slice would leave either side single-class).
SplitPlan chronological_split(const std::vector<SeizureCluster>& clusters, const IntervalMap& map,
                              double val_fraction, const ProtocolConfig& cfg = {});

std::string interval_map_to_json(const IntervalMap& map);
std::string split_plan_to_json(const SplitPlan& plan);

double total_duration(const std::vector<LabeledInterval>& intervals, IntervalLabel label);

}  // namespace teeg
