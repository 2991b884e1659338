#include "teeg/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "teeg/common.hpp"

namespace teeg {

IntervalLabel IntervalMap::at(double t) const {
  for (const LabeledInterval& iv : intervals)
    if (t >= iv.t0 && t < iv.t1) return iv.label;
  return IntervalLabel::kExcluded;
}

std::vector<SeizureCluster> cluster_seizures(const std::vector<Seizure>& seizures,
                                             const ProtocolConfig& cfg) {
  for (size_t i = 0; i < seizures.size(); ++i) {
    if (seizures[i].offset <= seizures[i].onset)
      fail("cluster_seizures: seizure " + std::to_string(i) + " has offset <= onset");
    if (i > 0 && seizures[i].onset <= seizures[i - 1].onset)
      fail("cluster_seizures: onsets not strictly increasing at index " + std::to_string(i));
  }
  std::vector<SeizureCluster> clusters;
  for (const Seizure& s : seizures) {
    const double ref = clusters.empty()
                           ? -1e300
                           : (cfg.gap_from_offset ? clusters.back().end
                                                  : clusters.back().members.back().onset);
    if (!clusters.empty() && s.onset - ref < cfg.cluster_gap_s) {
      clusters.back().members.push_back(s);
      clusters.back().end = std::max(clusters.back().end, s.offset);
    } else {
      SeizureCluster c;
      c.lead_onset = s.onset;
      c.end = s.offset;
      c.members = {s};
      clusters.push_back(std::move(c));
    }
  }
  return clusters;
}

namespace {

struct Zones {
  std::vector<std::pair<double, double>> ictal_sph;  // always excluded
  // margin zone and preictal window per cluster, index-aligned
  std::vector<std::pair<double, double>> margin;
  std::vector<std::pair<double, double>> preictal;
};

Zones collect_zones(const std::vector<SeizureCluster>& clusters, const ProtocolConfig& cfg) {
  Zones z;
  for (const SeizureCluster& c : clusters) {
    for (const Seizure& s : c.members) z.ictal_sph.push_back({s.onset, s.offset});
    z.ictal_sph.push_back({c.lead_onset - cfg.sph_s, c.lead_onset});
    z.margin.push_back({c.lead_onset - cfg.margin_s, c.end + cfg.margin_s});
    z.preictal.push_back({c.lead_onset - cfg.preictal_lead_s, c.lead_onset - cfg.sph_s});
  }
  return z;
}

bool inside(double t, const std::pair<double, double>& span) {
  return t >= span.first && t < span.second;
}

// Label of the elementary interval containing midpoint t, given validity.
IntervalLabel label_at(double t, const Zones& z, const std::vector<SeizureCluster>& clusters) {
  for (const auto& span : z.ictal_sph)
    if (inside(t, span)) return IntervalLabel::kExcluded;
  for (size_t k = 0; k < clusters.size(); ++k) {
    if (!clusters[k].valid || !inside(t, z.preictal[k])) continue;
    bool in_other_margin = false;
    for (size_t j = 0; j < clusters.size(); ++j)
      if (j != k && inside(t, z.margin[j])) in_other_margin = true;
    if (!in_other_margin) return IntervalLabel::kPreictal;
  }
  for (const auto& span : z.margin)
    if (inside(t, span)) return IntervalLabel::kExcluded;
  return IntervalLabel::kInterictal;
}

}  // namespace

IntervalMap build_interval_map(std::vector<SeizureCluster>& clusters,
                               const std::vector<RecordingExtent>& extents,
                               const ProtocolConfig& cfg) {
  for (size_t i = 1; i < clusters.size(); ++i)
    if (clusters[i].lead_onset < clusters[i - 1].end)
      fail("build_interval_map: clusters overlap at index " + std::to_string(i));
  for (const RecordingExtent& e : extents)
    if (e.t1 <= e.t0) fail("build_interval_map: empty recording extent");

  std::vector<RecordingExtent> sorted = extents;
  std::sort(sorted.begin(), sorted.end(),
            [](const RecordingExtent& a, const RecordingExtent& b) { return a.t0 < b.t0; });

  Zones z = collect_zones(clusters, cfg);

  // Pass 1: clipped pre-ictal coverage decides validity. Coverage counts
  // recorded time inside the window that is not claimed by ictal/SPH spans
  // or another cluster's margin.
  for (size_t k = 0; k < clusters.size(); ++k) {
    std::set<double> cuts{z.preictal[k].first, z.preictal[k].second};
    for (const auto& e : sorted) {
      cuts.insert(e.t0);
      cuts.insert(e.t1);
    }
    for (const auto& s : z.ictal_sph) {
      cuts.insert(s.first);
      cuts.insert(s.second);
    }
    for (size_t j = 0; j < z.margin.size(); ++j)
      if (j != k) {
        cuts.insert(z.margin[j].first);
        cuts.insert(z.margin[j].second);
      }
    double covered = 0;
    for (auto it = cuts.begin(); std::next(it) != cuts.end(); ++it) {
      const double a = *it, b = *std::next(it);
      const double mid = 0.5 * (a + b);
      if (!inside(mid, z.preictal[k])) continue;
      bool recorded = false;
      for (const auto& e : sorted) recorded = recorded || (mid >= e.t0 && mid < e.t1);
      if (!recorded) continue;
      bool blocked = false;
      for (const auto& s : z.ictal_sph) blocked = blocked || inside(mid, s);
      for (size_t j = 0; j < z.margin.size(); ++j)
        if (j != k) blocked = blocked || inside(mid, z.margin[j]);
      if (!blocked) covered += b - a;
    }
    clusters[k].preictal_coverage_s = covered;
    if (covered < cfg.min_preictal_s) {
      clusters[k].valid = false;
      if (covered < z.preictal[k].second - z.preictal[k].first)
        log_info("protocol: cluster at t=" + std::to_string(clusters[k].lead_onset) +
                 " is margin-deficient (" + std::to_string(covered) + " s pre-ictal), dropped");
    }
  }

  // Pass 2: sweep all boundaries and label elementary intervals.
  std::set<double> cuts;
  for (const auto& e : sorted) {
    cuts.insert(e.t0);
    cuts.insert(e.t1);
  }
  auto add_span = [&](const std::pair<double, double>& s) {
    cuts.insert(s.first);
    cuts.insert(s.second);
  };
  for (const auto& s : z.ictal_sph) add_span(s);
  for (const auto& s : z.margin) add_span(s);
  for (const auto& s : z.preictal) add_span(s);

  IntervalMap map;
  for (const auto& e : sorted) {
    std::vector<double> pts{e.t0};
    for (double c : cuts)
      if (c > e.t0 && c < e.t1) pts.push_back(c);
    pts.push_back(e.t1);
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
      const double a = pts[i], b = pts[i + 1];
      const IntervalLabel lab = label_at(0.5 * (a + b), z, clusters);
      if (!map.intervals.empty() && map.intervals.back().label == lab &&
          map.intervals.back().t1 == a) {
        map.intervals.back().t1 = b;
      } else {
        map.intervals.push_back({lab, a, b});
      }
    }
    // Unrecorded gaps between extents stay implicit; IntervalMap::at
    // returns excluded outside the stored intervals.
  }
  return map;
}

Eligibility check_eligibility(bool montage_ok, bool timeline_ok, int n_valid_clusters) {
  if (!montage_ok) return {false, "montage incomplete"};
  if (!timeline_ok) return {false, "timeline metadata missing"};
  if (n_valid_clusters < 2)
    return {false, "insufficient clusters (" + std::to_string(n_valid_clusters) + " valid)"};
  return {true, ""};
}

namespace {

// Portion of `iv` inside [t0, t1); empty result has t0 >= t1.
LabeledInterval clip(const LabeledInterval& iv, double t0, double t1) {
  return {iv.label, std::max(iv.t0, t0), std::min(iv.t1, t1)};
}

bool has_label(const std::vector<LabeledInterval>& ivs, IntervalLabel lab) {
  for (const auto& iv : ivs)
    if (iv.label == lab && iv.duration() > 0) return true;
  return false;
}

}  // namespace

double total_duration(const std::vector<LabeledInterval>& intervals, IntervalLabel label) {
  double total = 0;
  for (const auto& iv : intervals)
    if (iv.label == label) total += iv.duration();
  return total;
}

SplitPlan chronological_split(const std::vector<SeizureCluster>& clusters, const IntervalMap& map,
                              double val_fraction, const ProtocolConfig& cfg) {
  std::vector<const SeizureCluster*> valid;
  for (const auto& c : clusters)
    if (c.valid) valid.push_back(&c);
  if (valid.size() < 2)
    fail("chronological_split: fewer than 2 valid clusters (" + std::to_string(valid.size()) +
         ")");
  if (val_fraction < 0 || val_fraction >= 1)
    fail("chronological_split: val_fraction must lie in [0, 1)");

  const SeizureCluster& last = *valid.back();
  const SeizureCluster& prev = *valid[valid.size() - 2];
  const double t_split = prev.end + cfg.margin_s;
  const double last_pre_open = last.lead_onset - cfg.preictal_lead_s;

  SplitPlan plan;
  plan.t_split = t_split;
  std::vector<LabeledInterval> train_all;
  for (const LabeledInterval& iv : map.intervals) {
    if (iv.label == IntervalLabel::kExcluded) continue;
    if (iv.label == IntervalLabel::kPreictal) {
      // A pre-ictal interval belongs to the test split iff it lies in the
      // last cluster's window.
      if (iv.t0 >= last_pre_open && iv.t1 <= last.lead_onset)
        plan.test.push_back(iv);
      else
        train_all.push_back(iv);
    } else {
      if (iv.t0 >= t_split)
        plan.test.push_back(iv);
      else
        train_all.push_back(iv);
    }
  }
  if (train_all.empty()) fail("chronological_split: empty training span");

  double train_start = train_all.front().t0, train_end = train_all.front().t1;
  for (const auto& iv : train_all) {
    train_start = std::min(train_start, iv.t0);
    train_end = std::max(train_end, iv.t1);
  }

  if (val_fraction == 0) {
    plan.train = train_all;
    return plan;
  }

  // Primary rule: contiguous time slice at the tail of the training span.
  const double v_start = train_end - val_fraction * (train_end - train_start);
  std::vector<LabeledInterval> tr, va;
  for (const auto& iv : train_all) {
    LabeledInterval lo = clip(iv, train_start, v_start);
    LabeledInterval hi = clip(iv, v_start, train_end);
    if (lo.duration() > 0) tr.push_back(lo);
    if (hi.duration() > 0) va.push_back(hi);
  }

  const bool slice_ok = has_label(va, IntervalLabel::kPreictal) &&
                        has_label(va, IntervalLabel::kInterictal) &&
                        has_label(tr, IntervalLabel::kPreictal) &&
                        has_label(tr, IntervalLabel::kInterictal);
  if (slice_ok) {
    plan.train = tr;
    plan.val = va;
    return plan;
  }

  // Fallback: per-label chronological tails, so both splits keep both
  // labels whenever the training span has them at all.
  plan.train.clear();
  plan.val.clear();
  for (IntervalLabel lab : {IntervalLabel::kInterictal, IntervalLabel::kPreictal}) {
    std::vector<LabeledInterval> of_label;
    for (const auto& iv : train_all)
      if (iv.label == lab) of_label.push_back(iv);
    const double want = val_fraction * total_duration(of_label, lab);
    double taken = 0;
    std::vector<LabeledInterval> va_part;
    for (auto it = of_label.rbegin(); it != of_label.rend(); ++it) {
      if (taken >= want) {
        plan.train.push_back(*it);
        continue;
      }
      const double need = want - taken;
      if (it->duration() <= need) {
        va_part.push_back(*it);
        taken += it->duration();
      } else {
        LabeledInterval head = *it, tail = *it;
        head.t1 = it->t1 - need;
        tail.t0 = it->t1 - need;
        plan.train.push_back(head);
        va_part.push_back(tail);
        taken += need;
      }
    }
    plan.val.insert(plan.val.end(), va_part.begin(), va_part.end());
  }
  auto by_t0 = [](const LabeledInterval& a, const LabeledInterval& b) { return a.t0 < b.t0; };
  std::sort(plan.train.begin(), plan.train.end(), by_t0);
  std::sort(plan.val.begin(), plan.val.end(), by_t0);
  return plan;
}

namespace {

const char* label_name(IntervalLabel lab) {
  switch (lab) {
    case IntervalLabel::kInterictal: return "interictal";
    case IntervalLabel::kPreictal: return "preictal";
    case IntervalLabel::kExcluded: return "excluded";
  }
  return "?";
}

nlohmann::json intervals_json(const std::vector<LabeledInterval>& ivs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& iv : ivs)
    arr.push_back({{"label", label_name(iv.label)}, {"t0", iv.t0}, {"t1", iv.t1}});
  return arr;
}

}  // namespace

std::string interval_map_to_json(const IntervalMap& map) {
  return intervals_json(map.intervals).dump(2) + "\n";
}

std::string split_plan_to_json(const SplitPlan& plan) {
  nlohmann::json j{{"t_split", plan.t_split},
                   {"train", intervals_json(plan.train)},
                   {"val", intervals_json(plan.val)},
                   {"test", intervals_json(plan.test)}};
  return j.dump(2) + "\n";
}

}  // namespace teeg
