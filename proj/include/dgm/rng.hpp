#pragma once

#include <cstdint>
#include <random>

namespace dgm {

/// Seeded stream generator. Uses mt19937_64 for the bit stream and its own
/// uniform/normal transforms so that sequences do not depend on the standard
/// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller).
  double normal();
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based standard normal: a pure function of the key tuple.
double keyed_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c);

/// Derives an independent stream seed from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label);

}  // namespace dgm
