#pragma once

#include <cstddef>
#include <vector>

#include "dpcam/measure.hpp"
#include "dpcam/operators.hpp"
#include "dpcam/types.hpp"

namespace dpcam {

struct SolverConfig {
  double tau = 0.0;  // <= 0 means auto
  std::size_t max_iters = 2000;
  double rel_obj_tol = 1e-6;
  bool nonneg = true;
  bool debias = true;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (!(rel_obj_tol > 0.0)) throw std::invalid_argument("rel_obj_tol must be positive");
  }
};

struct ReconResult {
  std::vector<double> x_hat;
  std::vector<double> objective_history;
  std::size_t iterations = 0;
  double tau_used = 0.0;
  bool converged = false;
};

// 1/2 |y - A x|^2 + tau |x|_1.
double objective(const SensingOperator& op, std::span<const double> y, std::span<const double> x,
                 double tau);

// 0.05 * max|A' y|, the standard l-infinity back-projection heuristic.
double auto_tau(const SensingOperator& op, std::span<const double> y);

// Gradient projection onto the nonnegative orthant with Barzilai-Borwein step
// seeding and monotone backtracking; optional conjugate-gradient refit on the
// recovered support afterwards.
ReconResult solve_bpdn(const SensingOperator& op, const MeasurementRecord& record,
                       const SolverConfig& config);

// max over positive entries of |grad f + tau| and over zero entries of the
// negative part of (grad f + tau): the first-order optimality residual.
double kkt_residual(const SensingOperator& op, std::span<const double> y,
                    std::span<const double> x, double tau);

enum class NormalizeMode { unit_sum, per_flux };

JointDistribution normalize(const std::vector<double>& x_hat, const GridSpec& grid_signal,
                            const GridSpec& grid_idler, Basis basis,
                            NormalizeMode mode = NormalizeMode::unit_sum, double flux = 1.0);

}  // namespace dpcam
