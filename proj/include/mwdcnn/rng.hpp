#pragma once

// Counter-based random numbers.
//
// The generator is SplitMix64 evaluated in counter mode: draw i of a stream
// with key K is mix(K + (i + 1) * 0x9E3779B97F4A7C15), where mix is the
// SplitMix64 output finalizer. Because any draw is a pure function of (key,
// index), datasets and initializations can be regenerated piecewise. Keys
// for independent streams come from derive_key(seed, {path...}).

#include <cstdint>
#include <initializer_list>

namespace mwdcnn {

std::uint64_t splitmix64_mix(std::uint64_t z);

/// Key for the stream identified by `path` under `seed`.
std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller; pairs are generated together and the
  /// second value is returned by the next call.
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mwdcnn
