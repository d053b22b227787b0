#include "dpcam/patterns.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dpcam/rng.hpp"
#include "dpcam/types.hpp"

namespace dpcam {

namespace {

constexpr std::uint64_t stream_tag_a = 0x61;
constexpr std::uint64_t stream_tag_b = 0x62;

void fill_bits(std::vector<std::uint64_t>& bits, std::uint64_t key, std::size_t m, std::size_t n,
               std::size_t wpr) {
  const std::uint64_t tail = (n % 64) ? ((1ULL << (n % 64)) - 1) : ~0ULL;
  bits.resize(m * wpr);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t w = 0; w < wpr; ++w) {
      std::uint64_t v = rng::word(key, i * wpr + w);
      if (w + 1 == wpr) v &= tail;
      bits[i * wpr + w] = v;
    }
}

}  // namespace

PatternSet generate_patterns(std::uint64_t seed, std::size_t m, std::size_t n) {
  if (m < 1 || n < 1) throw std::invalid_argument("pattern set needs m >= 1 and n >= 1");
  PatternSet p;
  p.m = m;
  p.n = n;
  p.seed = seed;
  p.words_per_row = (n + 63) / 64;
  const std::uint64_t key_a = rng::word(seed, stream_tag_a);
  std::uint64_t key_b = rng::word(seed, stream_tag_b);
  fill_bits(p.a_bits, key_a, m, n, p.words_per_row);
  fill_bits(p.b_bits, key_b, m, n, p.words_per_row);
  // The two detectors must not share a mask matrix; regenerate b until they
  // differ (only ever triggers for tiny m*n).
  while (p.a_bits == p.b_bits) {
    key_b = rng::word(key_b, 1);
    fill_bits(p.b_bits, key_b, m, n, p.words_per_row);
  }
  return p;
}

double PatternSet::ones_fraction() const {
  std::uint64_t ones = 0;
  for (std::uint64_t w : a_bits) ones += std::popcount(w);
  for (std::uint64_t w : b_bits) ones += std::popcount(w);
  return static_cast<double>(ones) / (2.0 * static_cast<double>(m) * static_cast<double>(n));
}

std::size_t PatternSet::rows_outside_density(double lo, double hi) const {
  std::size_t count = 0;
  for (const auto* bits : {&a_bits, &b_bits})
    for (std::size_t i = 0; i < m; ++i) {
      std::uint64_t ones = 0;
      for (std::size_t w = 0; w < words_per_row; ++w)
        ones += std::popcount((*bits)[i * words_per_row + w]);
      const double density = static_cast<double>(ones) / static_cast<double>(n);
      if (density < lo || density > hi) ++count;
    }
  return count;
}

void PatternSet::save(const std::string& path) const {
  std::ostringstream out;
  out << "m " << m << "\n";
  out << "n " << n << "\n";
  out << "seed " << seed << "\n";
  for (const auto* bits : {&a_bits, &b_bits})
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        out << (((*bits)[i * words_per_row + j / 64] >> (j % 64)) & 1u ? '1' : '0');
      out << '\n';
    }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f << out.str();
  if (!f) throw io_error("failed writing " + path);
}

PatternSet PatternSet::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open " + path);
  std::string key;
  PatternSet p;
  for (auto* field : {&p.m, &p.n}) {
    std::size_t value = 0;
    if (!(f >> key >> value)) throw io_error(path + ": truncated header");
    *field = value;
  }
  if (!(f >> key >> p.seed)) throw io_error(path + ": truncated header");
  if (p.m < 1 || p.n < 1) throw io_error(path + ": bad dimensions");
  p.words_per_row = (p.n + 63) / 64;
  std::string line;
  std::getline(f, line);
  for (auto* bits : {&p.a_bits, &p.b_bits}) {
    bits->assign(p.m * p.words_per_row, 0);
    for (std::size_t i = 0; i < p.m; ++i) {
      if (!std::getline(f, line) || line.size() < p.n) throw io_error(path + ": truncated rows");
      for (std::size_t j = 0; j < p.n; ++j) {
        if (line[j] == '1')
          (*bits)[i * p.words_per_row + j / 64] |= 1ULL << (j % 64);
        else if (line[j] != '0')
          throw io_error(path + ": mask rows must be 0/1");
      }
    }
  }
  return p;
}

}  // namespace dpcam
