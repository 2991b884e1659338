#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace teeg {

// splitmix64 finalizer; the one mixing function all product-code randomness
// flows through so results are identical across compilers and platforms.
inline uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stateless counter-based generator: value i of stream `key` is a pure
// function of (key, i), so streams are seekable and order-independent.
class CounterRng {
 public:
  explicit CounterRng(uint64_t key) : key_(key) {}

  // Derive an independent substream.
  CounterRng stream(uint64_t salt) const { return CounterRng(mix64(key_ ^ mix64(salt))); }

  uint64_t bits(uint64_t counter) const { return mix64(key_ ^ mix64(counter * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL)); }

  // Uniform in [0, 1).
  double uniform(uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  double uniform(uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(counter);
  }

  // Standard normal via Box-Muller; consumes two substream values per draw.
  double normal(uint64_t counter) const {
    double u1 = static_cast<double>(bits(counter * 2) >> 11) * 0x1.0p-53;
    double u2 = static_cast<double>(bits(counter * 2 + 1) >> 11) * 0x1.0p-53;
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // Integer in [0, n); used for deterministic Fisher-Yates shuffles.
  uint64_t below(uint64_t counter, uint64_t n) const {
    return n == 0 ? 0 : bits(counter) % n;
  }

 private:
  uint64_t key_;
};

// Sequential convenience wrapper over CounterRng.
class SeqRng {
 public:
  explicit SeqRng(uint64_t key) : rng_(key) {}
  explicit SeqRng(const CounterRng& rng) : rng_(rng) {}
  double uniform() { return rng_.uniform(ctr_++); }
  double uniform(double lo, double hi) { return rng_.uniform(ctr_++, lo, hi); }
  double normal() { return rng_.normal(ctr_++); }
  uint64_t below(uint64_t n) { return rng_.below(ctr_++, n); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  CounterRng rng_;
  uint64_t ctr_ = 0;
};

}  // namespace teeg
