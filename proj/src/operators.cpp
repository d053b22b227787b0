#include "dpcam/operators.hpp"

#include <bit>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dpcam {

std::vector<SparseEntry> sparsify(std::span<const double> x, std::size_t n) {
  if (x.size() != n * n) throw std::invalid_argument("sparsify: wrong vector length");
  std::vector<SparseEntry> entries;
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t u = 0; u < n; ++u) {
      const double value = x[u + v * n];
      if (value != 0.0) entries.push_back({u, v, value});
    }
  return entries;
}

SensingOperator::SensingOperator(PatternSet patterns) : patterns_(std::move(patterns)) {
  const std::size_t m = patterns_.m;
  const std::size_t n = patterns_.n;
  b_dense_.assign(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (patterns_.b_bit(i, j)) b_dense_[i * n + j] = 1.0;

  words_per_col_ = (m + 63) / 64;
  a_cols_.assign(n * words_per_col_, 0);
  b_cols_.assign(n * words_per_col_, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (patterns_.a_bit(i, j)) a_cols_[j * words_per_col_ + i / 64] |= 1ULL << (i % 64);
      if (patterns_.b_bit(i, j)) b_cols_[j * words_per_col_ + i / 64] |= 1ULL << (i % 64);
    }
}

void SensingOperator::forward(std::span<const double> x, std::span<double> y) const {
  const std::size_t m = patterns_.m;
  const std::size_t n = patterns_.n;
  if (x.size() != n * n || y.size() != m) throw std::invalid_argument("forward: dimension mismatch");
  forward_calls_.fetch_add(1, std::memory_order_relaxed);
  const std::size_t wpr = patterns_.words_per_row;

#pragma omp parallel for schedule(static)
  for (long long row = 0; row < static_cast<long long>(m); ++row) {
    const std::size_t i = static_cast<std::size_t>(row);
    // t = reshape(x) * a_i: accumulate the idler-selected columns.
    std::vector<double> t(n, 0.0);
    const std::uint64_t* arow = patterns_.a_row(i);
    for (std::size_t w = 0; w < wpr; ++w) {
      std::uint64_t bits = arow[w];
      while (bits) {
        const std::size_t v = w * 64 + static_cast<std::size_t>(std::countr_zero(bits));
        bits &= bits - 1;
        const double* col = x.data() + v * n;
        for (std::size_t u = 0; u < n; ++u) t[u] += col[u];
      }
    }
    // y_i = b_i . t
    double acc = 0.0;
    const std::uint64_t* brow = patterns_.b_row(i);
    for (std::size_t w = 0; w < wpr; ++w) {
      std::uint64_t bits = brow[w];
      while (bits) {
        acc += t[w * 64 + static_cast<std::size_t>(std::countr_zero(bits))];
        bits &= bits - 1;
      }
    }
    y[i] = acc;
  }
}

void SensingOperator::adjoint(std::span<const double> y, std::span<double> g) const {
  const std::size_t m = patterns_.m;
  const std::size_t n = patterns_.n;
  if (y.size() != m || g.size() != n * n) throw std::invalid_argument("adjoint: dimension mismatch");
  adjoint_calls_.fetch_add(1, std::memory_order_relaxed);

  // Column v of the result is sum over rows with a_i[v]=1 of y_i * b_i.
  // One owner per column and ascending row order keep the result identical
  // for any thread count.
#pragma omp parallel for schedule(static)
  for (long long col = 0; col < static_cast<long long>(n); ++col) {
    const std::size_t v = static_cast<std::size_t>(col);
    double* out = g.data() + v * n;
    for (std::size_t u = 0; u < n; ++u) out[u] = 0.0;
    const std::uint64_t* avail = a_cols_.data() + v * words_per_col_;
    for (std::size_t w = 0; w < words_per_col_; ++w) {
      std::uint64_t bits = avail[w];
      while (bits) {
        const std::size_t i = w * 64 + static_cast<std::size_t>(std::countr_zero(bits));
        bits &= bits - 1;
        const double yi = y[i];
        const double* brow = b_dense_.data() + i * n;
        for (std::size_t u = 0; u < n; ++u) out[u] += yi * brow[u];
      }
    }
  }
}

std::vector<double> SensingOperator::forward(std::span<const double> x) const {
  std::vector<double> y(m());
  forward(x, y);
  return y;
}

std::vector<double> SensingOperator::adjoint(std::span<const double> y) const {
  std::vector<double> g(joint_dim());
  adjoint(y, g);
  return g;
}

void SensingOperator::forward_sparse(std::span<const SparseEntry> entries,
                                     std::span<double> y) const {
  const std::size_t m = patterns_.m;
  if (y.size() != m) throw std::invalid_argument("forward_sparse: dimension mismatch");
  forward_calls_.fetch_add(1, std::memory_order_relaxed);
  for (double& v : y) v = 0.0;

  // Each thread owns a block of measurement indices, so scatters never race
  // and accumulation order per index is the entry order for every schedule.
#pragma omp parallel
  {
#ifdef _OPENMP
    const int threads = omp_get_num_threads();
    const int tid = omp_get_thread_num();
#else
    const int threads = 1;
    const int tid = 0;
#endif
    const std::size_t w_begin = words_per_col_ * tid / threads;
    const std::size_t w_end = words_per_col_ * (tid + 1) / threads;
    for (const SparseEntry& e : entries) {
      const std::uint64_t* bcol = b_cols_.data() + e.u * words_per_col_;
      const std::uint64_t* acol = a_cols_.data() + e.v * words_per_col_;
      for (std::size_t w = w_begin; w < w_end; ++w) {
        std::uint64_t bits = bcol[w] & acol[w];
        while (bits) {
          y[w * 64 + static_cast<std::size_t>(std::countr_zero(bits))] += e.value;
          bits &= bits - 1;
        }
      }
    }
  }
}

void SensingOperator::adjoint_on_support(std::span<const double> y,
                                         std::span<const SparseEntry> support,
                                         std::span<double> out) const {
  if (y.size() != patterns_.m || out.size() != support.size())
    throw std::invalid_argument("adjoint_on_support: dimension mismatch");
  adjoint_calls_.fetch_add(1, std::memory_order_relaxed);

#pragma omp parallel for schedule(static)
  for (long long t = 0; t < static_cast<long long>(support.size()); ++t) {
    const SparseEntry& e = support[static_cast<std::size_t>(t)];
    const std::uint64_t* bcol = b_cols_.data() + e.u * words_per_col_;
    const std::uint64_t* acol = a_cols_.data() + e.v * words_per_col_;
    double acc = 0.0;
    for (std::size_t w = 0; w < words_per_col_; ++w) {
      std::uint64_t bits = bcol[w] & acol[w];
      while (bits) {
        acc += y[w * 64 + static_cast<std::size_t>(std::countr_zero(bits))];
        bits &= bits - 1;
      }
    }
    out[static_cast<std::size_t>(t)] = acc;
  }
}

std::vector<double> SensingOperator::explicit_row(std::size_t i) const {
  const std::size_t n = patterns_.n;
  if (i >= patterns_.m) throw std::out_of_range("explicit_row: index out of range");
  std::vector<double> row(n * n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    if (!patterns_.a_bit(i, v)) continue;
    for (std::size_t u = 0; u < n; ++u)
      if (patterns_.b_bit(i, u)) row[u + v * n] = 1.0;
  }
  return row;
}

namespace ref {

std::vector<double> forward_apply(const PatternSet& p, std::span<const double> x) {
  if (x.size() != p.n * p.n) throw std::invalid_argument("ref forward: dimension mismatch");
  std::vector<double> y(p.m, 0.0);
  for (std::size_t i = 0; i < p.m; ++i) {
    double acc = 0.0;
    for (std::size_t v = 0; v < p.n; ++v) {
      if (!p.a_bit(i, v)) continue;
      for (std::size_t u = 0; u < p.n; ++u)
        if (p.b_bit(i, u)) acc += x[u + v * p.n];
    }
    y[i] = acc;
  }
  return y;
}

std::vector<double> adjoint_apply(const PatternSet& p, std::span<const double> y) {
  if (y.size() != p.m) throw std::invalid_argument("ref adjoint: dimension mismatch");
  std::vector<double> g(p.n * p.n, 0.0);
  for (std::size_t v = 0; v < p.n; ++v)
    for (std::size_t u = 0; u < p.n; ++u) {
      double acc = 0.0;
      for (std::size_t i = 0; i < p.m; ++i)
        if (p.a_bit(i, v) && p.b_bit(i, u)) acc += y[i];
      g[u + v * p.n] = acc;
    }
  return g;
}

}  // namespace ref

}  // namespace dpcam
