#pragma once

#include <cstdint>
#include <vector>

namespace adt {

/// Counter-based PRNG (splitmix64): draw i is a pure function of (seed, i).
/// Every run owns its own instance; the library keeps no global RNG state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal();

  /// Uniform integer in [0, n); n must be positive.
  std::int64_t index(std::int64_t n);

  /// Derived stream decorrelated from this one. Does not advance the parent,
  /// so forks taken at different times with the same tag coincide.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  void restore(std::uint64_t seed, std::uint64_t counter) {
    seed_ = seed;
    counter_ = counter;
  }

  /// Fisher-Yates shuffle driven by this stream.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      std::int64_t j = index(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Shuffled identity permutation of length n.
std::vector<std::int64_t> permutation(std::int64_t n, Rng& rng);

}  // namespace adt
