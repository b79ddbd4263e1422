#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <random>

namespace recode {

// Deterministic uniform source. std::mt19937_64 output is fully specified by
// the standard; the draws below avoid std::*_distribution, whose sequences
// differ between standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n), n >= 1.
  std::size_t uniform_index(std::size_t n) {
    const auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

  friend std::ostream& operator<<(std::ostream& os, const Rng& rng) {
    return os << rng.engine_;
  }
  friend std::istream& operator>>(std::istream& is, Rng& rng) {
    return is >> rng.engine_;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace recode
