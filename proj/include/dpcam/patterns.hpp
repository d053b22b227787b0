#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

namespace dpcam {

// M pairs of binary masks, one per detector, packed 64 pixels per word.
// Regenerating from (seed, m, n) reproduces the set bit-exactly.
struct PatternSet {
  std::size_t m = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t words_per_row = 0;
  std::vector<std::uint64_t> a_bits;  // signal masks, m rows
  std::vector<std::uint64_t> b_bits;  // idler masks, m rows

  bool a_bit(std::size_t i, std::size_t j) const {
    return (a_bits[i * words_per_row + j / 64] >> (j % 64)) & 1u;
  }
  bool b_bit(std::size_t i, std::size_t j) const {
    return (b_bits[i * words_per_row + j / 64] >> (j % 64)) & 1u;
  }
  const std::uint64_t* a_row(std::size_t i) const { return a_bits.data() + i * words_per_row; }
  const std::uint64_t* b_row(std::size_t i) const { return b_bits.data() + i * words_per_row; }

  double ones_fraction() const;
  // Rows whose ones-density falls outside [lo, hi]; a diagnostic, not an
  // invariant: for small n a fair coin lands outside [0.4, 0.6] regularly.
  std::size_t rows_outside_density(double lo = 0.4, double hi = 0.6) const;

  void save(const std::string& path) const;
  static PatternSet load(const std::string& path);
};

PatternSet generate_patterns(std::uint64_t seed, std::size_t m, std::size_t n);

}  // namespace dpcam
