#include "eapo/rng.hpp"

#include <cmath>
#include <numbers>

namespace eapo {

std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream_id)
    : key_(mix64(seed ^ mix64(stream_id))) {}

CounterRng CounterRng::derive(std::uint64_t seed, std::uint64_t index,
                              StreamPurpose purpose) {
  const auto p = static_cast<std::uint64_t>(purpose);
  return CounterRng(seed, (p << 48) ^ index);
}

std::uint64_t CounterRng::next_u64() {
  const std::uint64_t i = counter_++;
  return mix64(key_ ^ (i * 0x9E3779B97F4A7C15ULL));
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::uniform_int(std::uint64_t n) {
  const unsigned __int128 m =
      static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
  return static_cast<std::uint64_t>(m >> 64);
}

double CounterRng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t CounterRng::categorical(std::span<const double> probs) {
  const double u = uniform();
  double cumulative = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  // Rounding left u above the total mass; fall back to the last nonzero entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.empty() ? 0 : probs.size() - 1;
}

void CounterRng::shuffle(std::vector<std::size_t>& items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_int(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace eapo
