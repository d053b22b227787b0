#pragma once

#include <vector>

#include "dpcam/types.hpp"

namespace dpcam {

// I(u;v) = H(u) + H(v) - H(u,v) in bits, plug-in estimate, 0 log 0 = 0.
double mutual_information(const JointDistribution& joint);

// log2(n): MI of perfect correlations with uniform marginals.
double max_capacity(std::size_t n);

// Zero entries below fraction*max, renormalize to unit sum.
JointDistribution apply_threshold(const JointDistribution& joint, double fraction);

struct ThresholdCurve {
  std::vector<double> fractions;
  std::vector<double> mi;
};

ThresholdCurve threshold_sweep(const JointDistribution& joint, const std::vector<double>& fractions);

// Fraction with the highest MI after moving-average smoothing over `window`
// points; how a reported threshold gets chosen.
double optimal_threshold(const ThresholdCurve& curve, std::size_t window = 2);

// Rise-then-fall shape test on the smoothed curve.
bool is_unimodal(const std::vector<double>& values, std::size_t window = 2);

struct GaussianFit {
  double sigma_ce = 0.0;  // effective correlation width, pixels
  double sigma_pe = 0.0;  // effective pump width, pixels
  double residual = 0.0;
};

// Least-squares fit of the separable discretized double-Gaussian model over
// (sigma_ce, sigma_pe, amplitude), Nelder-Mead with multi-starts.
GaussianFit fit_double_gaussian(const JointDistribution& joint);

// Mean over all n^2 entries of squared differences.
double mse(const JointDistribution& recon, const JointDistribution& ideal);

// 1 / (n sqrt(mse)).
double snr_estimate(double n, double mse_value);

// 2 log2(n d_x d_k / (pi e)), the classical bound on summed conjugate-basis MI.
double steering_bound(double n, double d_x, double d_k);

struct SteeringVerdict {
  double i_x = 0.0;
  double i_k = 0.0;
  double bound = 0.0;
  bool violated = false;
  double margin = 0.0;
};

SteeringVerdict steering_test(double i_x, double i_k, double bound);

enum class ProfileAxis { sum, difference };

struct ProfilePair {
  std::vector<double> x;  // length 2*side-1
  std::vector<double> y;
};

// Marginal of p(u,v) over the per-axis pixel sum or difference coordinate.
ProfilePair anti_diagonal_profile(const JointDistribution& joint, ProfileAxis axis);

// Width of a Gaussian + constant baseline least-squares fit to a profile,
// in pixels. Grid search over width with closed-form amplitude/baseline.
double profile_width(const std::vector<double>& profile);

}  // namespace dpcam
