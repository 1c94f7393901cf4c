#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace eapo {

// What a random stream is used for. Streams with different purposes (or env
// indices) never share draws.
enum class StreamPurpose : std::uint64_t {
  kInit = 1,
  kRollout = 2,
  kEval = 3,
  kShuffle = 4,
  kEnvReset = 5,
  kMdpGen = 6,
  kHeatmap = 7,
  kTest = 99,
};

// Counter-based generator: draw i of stream (seed, stream_id) is
// mix64(key ^ (i * 0x9E3779B97F4A7C15)) where key = mix64(seed ^ mix64(stream_id))
// and mix64 is the SplitMix64 finalizer. The full bit stream is documented in
// docs/rng.md so other implementations can reproduce it.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream_id);

  // Stream for (seed, index, purpose), e.g. one per environment slot.
  static CounterRng derive(std::uint64_t seed, std::uint64_t index,
                           StreamPurpose purpose);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform on {0, ..., n-1}; Lemire multiply-high reduction.
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal via Box-Muller (one draw pair per call).
  double normal();
  // Index sampled proportionally to probs (assumed to sum to ~1).
  std::size_t categorical(std::span<const double> probs);
  void shuffle(std::vector<std::size_t>& items);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace eapo
