#include "dpcam/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>

#include "dpcam/model.hpp"

namespace dpcam {

namespace {

double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return h;
}

}  // namespace

double mutual_information(const JointDistribution& joint) {
  const std::size_t n = joint.n();
  if (joint.x.size() != n * n) throw std::invalid_argument("mutual_information: bad table size");
  double total = 0.0;
  for (double v : joint.x) {
    if (v < -1e-12) throw std::invalid_argument("mutual_information: negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("mutual_information: input not unit-sum");

  std::vector<double> pu(n, 0.0), pv(n, 0.0);
  double h_uv = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const double* col = joint.x.data() + v * n;
    for (std::size_t u = 0; u < n; ++u) {
      const double p = col[u];
      pu[u] += p;
      pv[v] += p;
      if (p > 0.0) h_uv -= p * std::log2(p);
    }
  }
  const double mi = entropy_bits(pu) + entropy_bits(pv) - h_uv;
  return std::max(mi, 0.0);
}

double max_capacity(std::size_t n) {
  if (n < 1) throw std::invalid_argument("max_capacity: n must be >= 1");
  return std::log2(static_cast<double>(n));
}

JointDistribution apply_threshold(const JointDistribution& joint, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw std::invalid_argument("apply_threshold: fraction outside [0,1]");
  JointDistribution out = joint;
  const double peak = *std::max_element(out.x.begin(), out.x.end());
  const double cut = fraction * peak;
  double total = 0.0;
  for (double& v : out.x) {
    if (v < cut) v = 0.0;
    total += v;
  }
  if (!(total > 0.0)) throw std::invalid_argument("apply_threshold: all entries removed");
  for (double& v : out.x) v /= total;
  return out;
}

ThresholdCurve threshold_sweep(const JointDistribution& joint,
                               const std::vector<double>& fractions) {
  for (std::size_t i = 1; i < fractions.size(); ++i)
    if (fractions[i] < fractions[i - 1])
      throw std::invalid_argument("threshold_sweep: fractions must be ascending");
  ThresholdCurve curve;
  curve.fractions = fractions;
  curve.mi.resize(fractions.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(fractions.size()); ++i)
    curve.mi[i] = mutual_information(apply_threshold(joint, fractions[i]));
  return curve;
}

namespace {

// Trailing moving average; index i keeps the window ending at i.
std::vector<double> smooth(const std::vector<double>& values, std::size_t window) {
  if (window < 2 || values.size() < 2) return values;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double acc = 0.0;
    for (std::size_t j = lo; j <= i; ++j) acc += values[j];
    out[i] = acc / static_cast<double>(i - lo + 1);
  }
  return out;
}

}  // namespace

double optimal_threshold(const ThresholdCurve& curve, std::size_t window) {
  if (curve.fractions.empty()) throw std::invalid_argument("optimal_threshold: empty curve");
  const std::vector<double> sm = smooth(curve.mi, window);
  std::size_t best = 0;
  for (std::size_t i = 1; i < sm.size(); ++i)
    if (sm[i] > sm[best]) best = i;
  return curve.fractions[best];
}

bool is_unimodal(const std::vector<double>& values, std::size_t window) {
  if (values.size() < 2) return true;
  const std::vector<double> sm = smooth(values, window);
  std::size_t peak = 0;
  for (std::size_t i = 1; i < sm.size(); ++i)
    if (sm[i] > sm[peak]) peak = i;
  constexpr double slack = 1e-12;
  for (std::size_t i = 0; i < peak; ++i)
    if (sm[i] > sm[i + 1] + slack) return false;
  for (std::size_t i = peak; i + 1 < sm.size(); ++i)
    if (sm[i] + slack < sm[i + 1]) return false;
  return true;
}

namespace {

struct FitObjective {
  const JointDistribution& target;
  GridSpec unit_grid;
  double target_sq;

  explicit FitObjective(const JointDistribution& joint) : target(joint) {
    unit_grid = GridSpec{joint.side(), 1.0, joint.basis, 0.0};
    target_sq = 0.0;
    for (double v : joint.x) target_sq += v * v;
  }

  // Residual of the best-amplitude fit at log-widths (lc, lp).
  double operator()(double lc, double lp) const {
    const BiphotonParams params{std::exp(lp), std::exp(lc)};
    const JointDistribution model =
        target.basis == Basis::momentum ? momentum_joint_pdf(params, unit_grid, 8)
                                        : position_joint_pdf(params, unit_grid, 8);
    double mm = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < model.x.size(); ++i) {
      mm += model.x[i] * model.x[i];
      mt += model.x[i] * target.x[i];
    }
    if (!(mm > 0.0)) return target_sq;
    const double amp = std::max(mt / mm, 0.0);
    return target_sq - 2.0 * amp * mt + amp * amp * mm;
  }
};

struct SimplexPoint {
  std::array<double, 2> p;
  double f;
};

// Nelder-Mead on the 2D log-width plane.
SimplexPoint nelder_mead(const FitObjective& objective, std::array<double, 2> start) {
  std::array<SimplexPoint, 3> simplex;
  for (int k = 0; k < 3; ++k) {
    simplex[k].p = start;
    if (k > 0) simplex[k].p[k - 1] += 0.3;
    simplex[k].f = objective(simplex[k].p[0], simplex[k].p[1]);
  }
  auto by_value = [](const SimplexPoint& a, const SimplexPoint& b) { return a.f < b.f; };
  for (int iter = 0; iter < 200; ++iter) {
    std::sort(simplex.begin(), simplex.end(), by_value);
    const double spread = std::max(std::abs(simplex[2].p[0] - simplex[0].p[0]),
                                   std::abs(simplex[2].p[1] - simplex[0].p[1]));
    if (spread < 1e-8) break;
    std::array<double, 2> centroid{(simplex[0].p[0] + simplex[1].p[0]) / 2.0,
                                   (simplex[0].p[1] + simplex[1].p[1]) / 2.0};
    auto at = [&](double t) {
      return std::array<double, 2>{centroid[0] + t * (centroid[0] - simplex[2].p[0]),
                                   centroid[1] + t * (centroid[1] - simplex[2].p[1])};
    };
    const std::array<double, 2> refl = at(1.0);
    const double f_refl = objective(refl[0], refl[1]);
    if (f_refl < simplex[0].f) {
      const std::array<double, 2> expa = at(2.0);
      const double f_expa = objective(expa[0], expa[1]);
      simplex[2] = f_expa < f_refl ? SimplexPoint{expa, f_expa} : SimplexPoint{refl, f_refl};
      continue;
    }
    if (f_refl < simplex[1].f) {
      simplex[2] = {refl, f_refl};
      continue;
    }
    const std::array<double, 2> contr = at(-0.5);
    const double f_contr = objective(contr[0], contr[1]);
    if (f_contr < simplex[2].f) {
      simplex[2] = {contr, f_contr};
      continue;
    }
    for (int k = 1; k < 3; ++k) {
      simplex[k].p[0] = (simplex[k].p[0] + simplex[0].p[0]) / 2.0;
      simplex[k].p[1] = (simplex[k].p[1] + simplex[0].p[1]) / 2.0;
      simplex[k].f = objective(simplex[k].p[0], simplex[k].p[1]);
    }
  }
  std::sort(simplex.begin(), simplex.end(), by_value);
  return simplex[0];
}

}  // namespace

GaussianFit fit_double_gaussian(const JointDistribution& joint) {
  if (joint.x.empty()) throw std::invalid_argument("fit_double_gaussian: empty input");
  const auto [lo, hi] = std::minmax_element(joint.x.begin(), joint.x.end());
  if (!(*hi > *lo)) throw std::invalid_argument("fit_double_gaussian: flat input");

  const FitObjective objective(joint);
  const double side = static_cast<double>(joint.side());
  const std::array<std::array<double, 2>, 5> starts = {{
      {std::log(0.5), std::log(side / 4.0)},
      {std::log(1.0), std::log(side / 8.0)},
      {std::log(0.25), std::log(side / 2.0)},
      {std::log(2.0), std::log(side / 4.0)},
      {std::log(1.0), std::log(1.0)},
  }};
  SimplexPoint best{{0.0, 0.0}, std::numeric_limits<double>::infinity()};
  for (const auto& start : starts) {
    const SimplexPoint candidate = nelder_mead(objective, start);
    if (candidate.f < best.f) best = candidate;
  }

  GaussianFit fit;
  fit.sigma_ce = std::exp(best.p[0]);
  fit.sigma_pe = std::exp(best.p[1]);
  fit.residual = best.f;
  return fit;
}

double mse(const JointDistribution& recon, const JointDistribution& ideal) {
  if (recon.x.size() != ideal.x.size() || recon.n() != ideal.n())
    throw std::invalid_argument("mse: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < recon.x.size(); ++i) {
    const double d = recon.x[i] - ideal.x[i];
    acc += d * d;
  }
  return acc / static_cast<double>(recon.x.size());
}

double snr_estimate(double n, double mse_value) {
  if (mse_value < 0.0) throw std::invalid_argument("snr_estimate: negative mse");
  if (mse_value == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (n * std::sqrt(mse_value));
}

double steering_bound(double n, double d_x, double d_k) {
  const double arg = n * d_x * d_k / (M_PI * std::exp(1.0));
  if (!(arg > 0.0)) throw std::invalid_argument("steering_bound: undefined for nonpositive argument");
  return 2.0 * std::log2(arg);
}

SteeringVerdict steering_test(double i_x, double i_k, double bound) {
  SteeringVerdict verdict;
  verdict.i_x = i_x;
  verdict.i_k = i_k;
  verdict.bound = bound;
  verdict.margin = i_x + i_k - bound;
  verdict.violated = verdict.margin > 0.0;
  return verdict;
}

ProfilePair anti_diagonal_profile(const JointDistribution& joint, ProfileAxis axis) {
  const std::size_t side = joint.side();
  const std::size_t n = joint.n();
  if (joint.grid_idler.side != side || joint.x.size() != n * n)
    throw std::invalid_argument("anti_diagonal_profile: non-square joint");
  ProfilePair profile;
  profile.x.assign(2 * side - 1, 0.0);
  profile.y.assign(2 * side - 1, 0.0);
  const long long offset = static_cast<long long>(side) - 1;
  for (std::size_t v = 0; v < n; ++v) {
    const long long vx = static_cast<long long>(v / side);
    const long long vy = static_cast<long long>(v % side);
    const double* col = joint.x.data() + v * n;
    for (std::size_t u = 0; u < n; ++u) {
      const long long ux = static_cast<long long>(u / side);
      const long long uy = static_cast<long long>(u % side);
      const double p = col[u];
      if (axis == ProfileAxis::difference) {
        profile.x[ux - vx + offset] += p;
        profile.y[uy - vy + offset] += p;
      } else {
        profile.x[ux + vx] += p;
        profile.y[uy + vy] += p;
      }
    }
  }
  return profile;
}

double profile_width(const std::vector<double>& profile) {
  const std::size_t len = profile.size();
  if (len < 3) throw std::invalid_argument("profile_width: profile too short");
  const double mid = (static_cast<double>(len) - 1.0) / 2.0;
  const double upper = std::max(10.0, static_cast<double>(len));

  double best_sigma = upper;
  double best_residual = std::numeric_limits<double>::infinity();
  std::vector<double> gauss(len);
  for (int step = 0; step < 400; ++step) {
    const double t = static_cast<double>(step) / 399.0;
    const double sigma = 0.05 * std::pow(upper / 0.05, t);
    double gg = 0.0, gs = 0.0, gy = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double d = static_cast<double>(i) - mid;
      gauss[i] = std::exp(-d * d / (2.0 * sigma * sigma));
      gg += gauss[i] * gauss[i];
      gs += gauss[i];
      gy += gauss[i] * profile[i];
      sy += profile[i];
    }
    const double count = static_cast<double>(len);
    const double det = gg * count - gs * gs;
    double amp = 0.0, base = sy / count;
    if (std::abs(det) > 1e-14) {
      amp = (gy * count - gs * sy) / det;
      base = (gg * sy - gs * gy) / det;
    }
    double residual = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double r = profile[i] - amp * gauss[i] - base;
      residual += r * r;
    }
    if (residual < best_residual) {
      best_residual = residual;
      best_sigma = sigma;
    }
  }
  return best_sigma;
}

}  // namespace dpcam
