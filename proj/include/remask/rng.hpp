#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace remask {

/// Seeded random stream. All draws are defined in terms of the raw
/// mt19937_64 output so sequences are identical across standard libraries:
///   uniform() = (next() >> 11) * 2^-53, a double in [0, 1)
///   below(n)  = next() % n after rejecting the biased tail
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream derived from a root seed and a name, so that adding a
  /// new consumer never perturbs the draws seen by existing ones.
  static Rng stream(std::uint64_t seed, std::string_view name);

  std::uint64_t next() { return engine_(); }
  double uniform();
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace remask
