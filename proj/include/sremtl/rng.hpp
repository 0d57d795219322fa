#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace sremtl {

/// Seeded PRNG that can derive independent child streams by name.
///
/// split() depends only on the construction seed and the tag, never on how
/// many numbers were already drawn, so components can be reseeded in any
/// order and still reproduce the same streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::string_view tag) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return engine_(); }
  // Uniform in the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p);
  // Standard Gumbel(0, 1) sample.
  double gumbel();

  template <typename T>
  void shuffle(std::span<T> values) {
    std::shuffle(values.begin(), values.end(), engine_);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace sremtl
