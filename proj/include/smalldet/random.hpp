#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace smalldet {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the i-th output is mix64(key + i * golden).
///
/// A stream is fully determined by its key, so any (seed, stream, index)
/// triple can be addressed without advancing other streams. Monte Carlo
/// trials key one stream per trial index, which makes results independent
/// of how trials are partitioned across workers.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  /// Stream for (seed, stream, index). Distinct triples give unrelated keys.
  static constexpr CounterRng keyed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index) noexcept {
    return CounterRng(mix64(mix64(seed ^ 0x6a09e667f3bcc909ULL) + stream * 0x9e3779b97f4a7c15ULL
                            + mix64(index + 0x3c6ef372fe94f82bULL)));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix64(key_ + counter_);
  }

  /// Uniform double in the open interval (0, 1).
  constexpr double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Standard normal draws. Uses std::normal_distribution, so sequences are
/// reproducible for a given standard library implementation.
class StandardNormal {
 public:
  template <typename Rng>
  double operator()(Rng& rng) {
    return dist_(rng);
  }

 private:
  std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace smalldet
