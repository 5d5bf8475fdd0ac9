#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace longtail {

// Deterministic xoshiro256++ generator. We do not use the <random>
// distributions because their output is implementation-defined; every
// draw here is reproducible from the seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Child stream for a named stage and index, derived from a master seed.
  // Independent streams let parallel episode evaluation stay deterministic.
  static Rng stream(std::uint64_t master_seed, std::string_view stage,
                    std::uint64_t index);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_[4];
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

// 64-bit FNV-1a, used for config-section hashes and registry hashes.
std::uint64_t fnv1a_hash(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace longtail
