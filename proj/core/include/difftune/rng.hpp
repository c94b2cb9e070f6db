#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace difftune {

/// Derives an independent stream seed from a base seed and a stream index
/// (splitmix64 finalizer over both words).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

/// Seeded generator with platform-stable sampling helpers. The standard
/// distributions are implementation-defined, so byte-stable outputs across
/// toolchains need these instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [low, high], inclusive. Requires low <= high.
  std::int64_t uniform_int(std::int64_t low, std::int64_t high);

  /// Uniform index in [0, n). Requires n > 0.
  std::size_t index(std::size_t n);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace difftune
