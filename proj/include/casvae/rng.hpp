#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace casvae {

/// Deterministic seedable generator: a splitmix64 integer mixer feeding
/// uniform and Box–Muller normal sampling. Identical seeds produce
/// bit-identical streams on every platform (no libc/std distribution
/// functions are involved anywhere in the stream).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed), seed_(seed) {}

  /// splitmix64: increment a Weyl sequence, then mix.
  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box–Muller; the second variate of each pair is
  /// cached, so draws come in deterministic pairs.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();  // guard log(0)
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Derive an independent substream from the construction seed and a stream
  /// id. Depends only on (seed, stream) — never on how many draws were taken
  /// — so per-item streams are stable under reordering of work.
  Rng fork(std::uint64_t stream) const {
    std::uint64_t z = seed_ ^ (0x632BE59BD9B4E019ull * (stream + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t state_;
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace casvae
