#include "adt/rng.hpp"

#include <cmath>
#include <numbers>

#include "adt/errors.hpp"

namespace adt {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
  return mix64(seed_ + kGolden * ++counter_);
}

double Rng::uniform() {
  // 53 mantissa bits -> [0,1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double Rng::normal() {
  // (0,1] for the log argument
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t Rng::index(std::int64_t n) {
  if (n <= 0) throw ConfigError("Rng::index: n must be positive");
  return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(mix64(seed_ ^ (kGolden * (stream + 0x51ED2701ull))));
}

std::vector<std::int64_t> permutation(std::int64_t n, Rng& rng) {
  std::vector<std::int64_t> p(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  rng.shuffle(p);
  return p;
}

}  // namespace adt
