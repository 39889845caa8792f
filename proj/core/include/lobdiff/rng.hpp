#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace lobdiff {

/// Derives an independent stream seed from a parent seed and a purpose label,
/// so adding a consumer never shifts the randomness of another one.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view purpose);
std::uint64_t derive_seed(std::uint64_t parent, std::string_view purpose, std::uint64_t index);

/// 64-bit Mersenne Twister with stateless helpers: the engine is the whole state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lobdiff
