#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpcam/operators.hpp"
#include "dpcam/rng.hpp"
#include "dpcam/types.hpp"

namespace dpcam {

struct MeasurementRecord {
  std::vector<std::uint64_t> y;
  std::size_t n = 0;       // per-detector dimension of the generating operator
  double flux = 0.0;       // detected-photon budget per measurement
  double t_aq = 1.0;       // seconds per pattern
  std::uint64_t seed = 0;  // noise seed

  std::size_t m() const { return y.size(); }

  void save(const std::string& path) const;
  static MeasurementRecord load(const std::string& path);
};

// Exact Poisson sampling: product-of-uniforms inversion for small means,
// transformed-rejection (PTRS) for large ones.
std::uint64_t poisson_sample(double mean, rng::Stream& stream);

// y[i] ~ Poisson(flux * (A x)[i] + dark_rate); each row draws from its own
// substream of `seed`, so the record is independent of evaluation order.
MeasurementRecord simulate_measurements(const JointDistribution& joint, const SensingOperator& op,
                                        double flux, std::uint64_t seed, double t_aq = 1.0,
                                        double dark_rate = 0.0);

// t = n^3 snr^2 / flux, in seconds.
double raster_scan_time(double n, double snr, double flux_per_second);

// n^2 / log2(n).
double compressive_advantage(double n);

// std(y) / sqrt(mean(y)): shot-noise margin of a count record.
double noise_margin(const MeasurementRecord& record);

struct SolverConfig;  // recon.hpp

struct FluxSweepResult {
  std::vector<double> flux_grid;
  std::vector<double> mse;
  std::vector<double> beta_margin;

  void save_csv(const std::string& path) const;
};

// Simulate + reconstruct + score at each flux; per-point seeds derive from
// `seed` so points are independent of execution order.
FluxSweepResult flux_sweep(const JointDistribution& joint, const SensingOperator& op,
                           const std::vector<double>& flux_grid, const SolverConfig& solver,
                           std::uint64_t seed);

}  // namespace dpcam
