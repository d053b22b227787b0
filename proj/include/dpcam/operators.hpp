#pragma once

#include <atomic>
#include <cstddef>
#include <span>
#include <vector>

#include "dpcam/patterns.hpp"

namespace dpcam {

// Entries of a sparse length-n^2 vector, as (signal pixel, idler pixel, value).
struct SparseEntry {
  std::size_t u;
  std::size_t v;
  double value;
};

std::vector<SparseEntry> sparsify(std::span<const double> x, std::size_t n);

// The M x n^2 sensing matrix whose row i is the Kronecker product of mask
// rows a_i and b_i, applied without ever materializing it. Dense applies cost
// O(M n^2) like any dense matrix, but a sparse input with k nonzeros costs
// O(M k / 64) word operations via packed mask columns.
class SensingOperator {
 public:
  explicit SensingOperator(PatternSet patterns);

  std::size_t m() const { return patterns_.m; }
  std::size_t n() const { return patterns_.n; }
  std::size_t joint_dim() const { return patterns_.n * patterns_.n; }
  const PatternSet& patterns() const { return patterns_; }

  // y[i] = b_i . reshape(x) . a_i ; parallel over rows.
  void forward(std::span<const double> x, std::span<double> y) const;
  // g = A' y ; parallel over output rows, row-ascending accumulation so the
  // result is identical for any thread count.
  void adjoint(std::span<const double> y, std::span<double> g) const;

  std::vector<double> forward(std::span<const double> x) const;
  std::vector<double> adjoint(std::span<const double> y) const;

  // Exact forward for sparse x.
  void forward_sparse(std::span<const SparseEntry> entries, std::span<double> y) const;

  // Gradient of 1/2 |A_S c - y|^2 restricted to a fixed support: entry t gets
  // sum_i y[i] a_i[v_t] b_i[u_t]. Used by the debias refit.
  void adjoint_on_support(std::span<const double> y, std::span<const SparseEntry> support,
                          std::span<double> out) const;

  std::vector<double> explicit_row(std::size_t i) const;

  std::uint64_t forward_calls() const { return forward_calls_.load(std::memory_order_relaxed); }
  std::uint64_t adjoint_calls() const { return adjoint_calls_.load(std::memory_order_relaxed); }

 private:
  PatternSet patterns_;
  std::vector<double> a_dense_;  // m*n, 0/1
  std::vector<double> b_dense_;
  std::size_t words_per_col_ = 0;
  std::vector<std::uint64_t> a_cols_;  // n rows of packed measurement bits
  std::vector<std::uint64_t> b_cols_;
  mutable std::atomic<std::uint64_t> forward_calls_{0};
  mutable std::atomic<std::uint64_t> adjoint_calls_{0};
};

// Straightforward serial loops over the definitions; the oracle the fast
// kernels are tested against.
namespace ref {
std::vector<double> forward_apply(const PatternSet& p, std::span<const double> x);
std::vector<double> adjoint_apply(const PatternSet& p, std::span<const double> y);
}  // namespace ref

}  // namespace dpcam
