#pragma once

#include <cstdint>

namespace dpcam::rng {

inline constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer: bijective avalanche mix.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based word t of the stream identified by key. Random access, no
// state: word(key, t) for any t gives the same value in any order, which is
// what makes parallel generation and replica seeding auditable.
constexpr std::uint64_t word(std::uint64_t key, std::uint64_t t) {
  return mix64(key + (t + 1) * golden);
}

constexpr double to_unit_double(std::uint64_t w) {
  return static_cast<double>(w >> 11) * 0x1.0p-53;
}

// Derive an independent child seed from a master seed, a role tag, and an
// index (replica number, sweep point, measurement row, ...).
constexpr std::uint64_t seed_for(std::uint64_t master, std::uint64_t role, std::uint64_t index) {
  return word(word(master, role), index);
}

// Stable role tags used by the pipeline's seed tree.
namespace role {
inline constexpr std::uint64_t patterns = 1;
inline constexpr std::uint64_t noise = 2;
inline constexpr std::uint64_t replica = 3;
inline constexpr std::uint64_t sweep_point = 4;
}  // namespace role

// Sequential view over a counter stream.
class Stream {
 public:
  explicit Stream(std::uint64_t key, std::uint64_t start = 0) : key_(key), t_(start) {}

  std::uint64_t next_u64() { return word(key_, t_++); }
  double next_double() { return to_unit_double(next_u64()); }
  std::uint64_t position() const { return t_; }

 private:
  std::uint64_t key_;
  std::uint64_t t_;
};

}  // namespace dpcam::rng
