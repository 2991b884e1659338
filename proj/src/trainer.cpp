#include "teeg/trainer.hpp"
#include <atomic>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <thread>

#include "teeg/common.hpp"
#include "teeg/rng.hpp"

namespace teeg {

void SegmentSet::add_interval(std::vector<LabeledSegment> segs) {
  const size_t begin = segments.size();
  for (auto& s : segs) segments.push_back(std::move(s));
  if (segments.size() > begin) intervals.push_back({begin, segments.size()});
}

std::vector<TrainingSequence> make_sequences(const SegmentSet& set, int64_t context,
                                             int64_t stride) {
  if (context < 1 || stride < 1) fail("make_sequences: context and stride must be positive");
  std::vector<TrainingSequence> seqs;
  for (const auto& [begin, end] : set.intervals) {
    const int64_t n = static_cast<int64_t>(end - begin);
    for (int64_t start = 0; start + context <= n; start += stride) {
      TrainingSequence seq;
      seq.label = set.segments[begin + static_cast<size_t>(start)].label;
      for (int64_t k = 0; k < context; ++k) {
        const size_t idx = begin + static_cast<size_t>(start + k);
        if (set.segments[idx].label != seq.label)
          fail("make_sequences: mixed labels inside one interval");
        seq.seg_indices.push_back(idx);
      }
      seqs.push_back(std::move(seq));
    }
  }
  return seqs;
}

namespace {

struct Adam {
  TensorMap m, v;
  int64_t t = 0;

  void step(TensorMap& params, const TensorMap& grads, double lr, double clip_norm) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    if (m.empty()) {
      for (const auto& [name, g] : grads) {
        m[name] = Tensor::zeros(g.shape);
        v[name] = Tensor::zeros(g.shape);
      }
    }
    double norm_sq = 0;
    for (const auto& [name, g] : grads)
      for (double x : g.data) norm_sq += x * x;
    const double norm = std::sqrt(norm_sq);
    const double scale = (clip_norm > 0 && norm > clip_norm) ? clip_norm / norm : 1.0;
    ++t;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    for (auto& [name, g] : grads) {
      Tensor& mm = m.at(name);
      Tensor& vv = v.at(name);
      Tensor& p = params.at(name);
      for (size_t i = 0; i < g.data.size(); ++i) {
        const double gi = g.data[i] * scale;
        mm.data[i] = kBeta1 * mm.data[i] + (1 - kBeta1) * gi;
        vv.data[i] = kBeta2 * vv.data[i] + (1 - kBeta2) * gi * gi;
        const double mhat = mm.data[i] / bc1;
        const double vhat = vv.data[i] / bc2;
        p.data[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
      }
    }
  }
};

struct SeqEval {
  double loss = 0;
  TensorMap grads;
};

// Graphs cached by sequence length; each worker gets its own Run.
class GraphCache {
 public:
  explicit GraphCache(const ModelConfig& cfg) : cfg_(cfg) {}
  const Graph& get(int64_t n_segments) {
    auto it = cache_.find(n_segments);
    if (it == cache_.end())
      it = cache_.emplace(n_segments, build_sequence_graph(cfg_, n_segments)).first;
    return *it->second;
  }

 private:
  ModelConfig cfg_;
  std::map<int64_t, std::unique_ptr<Graph>> cache_;
};

SeqEval eval_sequence(const Graph& g, const SegmentSet& store, const TrainingSequence& seq,
                      const TensorMap& params, const Standardizer& standardizer,
                      const ModelConfig& cfg, bool with_grads, AccessLog* log) {
  TensorMap bindings = params;
  for (size_t i = 0; i < seq.seg_indices.size(); ++i) {
    const LabeledSegment& seg = store.segments[seq.seg_indices[i]];
    if (log) log->note(seg.t_start);
    bindings["seg." + std::to_string(i)] = standardizer.apply(seg);
  }
  bindings["h0"] = Tensor({1, cfg.bb.d_model});
  bindings["target"] = Tensor::scalar(static_cast<double>(seq.label));
  Run run(g);
  run.forward(bindings);
  SeqEval out;
  out.loss = run.value("loss").data[0];
  if (with_grads) out.grads = run.backward("loss", Tensor::scalar(1.0));
  return out;
}

double mean_val_loss(GraphCache& graphs, const SegmentSet& store,
                     const std::vector<TrainingSequence>& val_seqs, const TensorMap& params,
                     const Standardizer& standardizer, const ModelConfig& cfg) {
  if (val_seqs.empty()) return 0;
  double total = 0;
  for (const TrainingSequence& seq : val_seqs) {
    const Graph& g = graphs.get(static_cast<int64_t>(seq.seg_indices.size()));
    total += eval_sequence(g, store, seq, params, standardizer, cfg, false, nullptr).loss;
  }
  return total / static_cast<double>(val_seqs.size());
}

}  // namespace

FitResult fit(const SegmentSet& store, const std::vector<TrainingSequence>& train_seqs,
              const std::vector<TrainingSequence>& val_seqs, const ModelConfig& mcfg,
              const Standardizer& standardizer, const TrainConfig& tcfg, AccessLog* access_log) {
  std::vector<size_t> pre_idx, inter_idx;
  for (size_t i = 0; i < train_seqs.size(); ++i)
    (train_seqs[i].label == 1 ? pre_idx : inter_idx).push_back(i);
  if (pre_idx.empty() || inter_idx.empty())
    fail("fit: training data must contain both classes (" + std::to_string(pre_idx.size()) +
         " pre-ictal, " + std::to_string(inter_idx.size()) + " inter-ictal sequences)");

  FitResult result;
  result.n_pre_sequences = static_cast<int64_t>(pre_idx.size());
  result.n_inter_sequences = static_cast<int64_t>(inter_idx.size());
  log_info("fit: " + std::to_string(pre_idx.size()) + " pre-ictal / " +
           std::to_string(inter_idx.size()) + " inter-ictal training sequences (ratio " +
           std::to_string(static_cast<double>(pre_idx.size()) /
                          static_cast<double>(inter_idx.size())) +
           ")");

  TensorMap params = init_model_params(mcfg, tcfg.seed);
  GraphCache graphs(mcfg);
  Adam adam;
  const int n_workers = std::max(1, tcfg.workers);

  double best_val = 1e300;
  result.params = params;
  int since_best = 0;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    SeqRng rng(CounterRng(tcfg.seed).stream(0xe90c + static_cast<uint64_t>(epoch)));
    std::vector<size_t> pre = pre_idx, inter = inter_idx;
    rng.shuffle(pre);
    rng.shuffle(inter);
    std::vector<size_t> order;
    if (tcfg.max_seq_per_epoch > 0) {
      const size_t half = static_cast<size_t>(tcfg.max_seq_per_epoch) / 2;
      pre.resize(std::min(pre.size(), half));
      inter.resize(std::min(inter.size(), half));
    }
    order.insert(order.end(), pre.begin(), pre.end());
    order.insert(order.end(), inter.begin(), inter.end());
    rng.shuffle(order);

    double epoch_loss = 0;
    int64_t epoch_n = 0;
    for (size_t b = 0; b < order.size(); b += static_cast<size_t>(tcfg.batch_size)) {
      const size_t b_end = std::min(order.size(), b + static_cast<size_t>(tcfg.batch_size));
      const size_t n = b_end - b;
      std::vector<SeqEval> evals(n);
      auto work = [&](size_t slot) {
        const TrainingSequence& seq = train_seqs[order[b + slot]];
        const Graph& g = graphs.get(static_cast<int64_t>(seq.seg_indices.size()));
        evals[slot] =
            eval_sequence(g, store, seq, params, standardizer, mcfg, true, access_log);
      };
      if (n_workers == 1 || n == 1) {
        for (size_t s = 0; s < n; ++s) work(s);
      } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int w = 0; w < std::min<int>(n_workers, static_cast<int>(n)); ++w)
          pool.emplace_back([&] {
            for (size_t s = next.fetch_add(1); s < n; s = next.fetch_add(1)) work(s);
          });
        for (auto& th : pool) th.join();
      }
      // Accumulate in slot order so results do not depend on scheduling.
      TensorMap batch_grads;
      for (size_t s = 0; s < n; ++s) {
        epoch_loss += evals[s].loss;
        ++epoch_n;
        if (!std::isfinite(evals[s].loss))
          fail("fit: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
               std::to_string(b / static_cast<size_t>(tcfg.batch_size)));
        for (auto& [name, grad] : evals[s].grads) {
          auto it = batch_grads.find(name);
          if (it == batch_grads.end()) {
            batch_grads[name] = grad;
          } else {
            for (size_t i = 0; i < grad.data.size(); ++i) it->second.data[i] += grad.data[i];
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(n);
      for (auto& [name, grad] : batch_grads)
        for (double& x : grad.data) x *= inv;
      adam.step(params, batch_grads, tcfg.lr, tcfg.clip_norm);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_n ? epoch_loss / static_cast<double>(epoch_n) : 0;
    stats.val_loss = mean_val_loss(graphs, store, val_seqs, params, standardizer, mcfg);
    result.history.push_back(stats);
    log_info("fit: epoch " + std::to_string(epoch) + " train_loss " +
             std::to_string(stats.train_loss) + " val_loss " + std::to_string(stats.val_loss));
    if (!std::isfinite(stats.val_loss))
      fail("fit: non-finite validation loss at epoch " + std::to_string(epoch));

    const double monitored = val_seqs.empty() ? stats.train_loss : stats.val_loss;
    if (monitored < best_val - 1e-12) {
      best_val = monitored;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= tcfg.patience) {
      log_info("fit: early stop at epoch " + std::to_string(epoch) + " (best " +
               std::to_string(result.best_epoch) + ")");
      break;
    }
  }
  return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail("history: cannot open for write: " + path);
  f << "epoch,train_loss,val_loss\n";
  for (const EpochStats& s : history) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", s.epoch, s.train_loss, s.val_loss);
    f << buf;
  }
}

}  // namespace teeg
