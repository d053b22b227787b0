#include "dpcam/recon.hpp"

#include <algorithm>
#include <cmath>

namespace dpcam {

namespace {

std::vector<double> to_double(const std::vector<std::uint64_t>& counts) {
  std::vector<double> y(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) y[i] = static_cast<double>(counts[i]);
  return y;
}

double l1_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += std::abs(v);
  return s;
}

double objective_from_residual(std::span<const double> ax, std::span<const double> y,
                               std::span<const double> x, double tau) {
  double quad = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - ax[i];
    quad += r * r;
  }
  return 0.5 * quad + tau * l1_norm(x);
}

// Least-squares refit on the recovered support via conjugate gradients on the
// normal equations; zeros stay zero.
void debias_on_support(const SensingOperator& op, std::span<const double> y,
                       std::vector<double>& x) {
  std::vector<SparseEntry> support = sparsify(x, op.n());
  if (support.empty()) return;
  const std::size_t k = support.size();

  std::vector<double> residual(y.size());
  std::vector<double> ax(y.size());
  op.forward_sparse(support, ax);
  for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - ax[i];

  std::vector<double> s(k), p(k);
  op.adjoint_on_support(residual, support, s);
  p = s;
  double gamma = 0.0;
  for (double v : s) gamma += v * v;
  const double gamma0 = gamma;
  if (!(gamma0 > 0.0)) return;

  std::vector<SparseEntry> dir = support;
  std::vector<double> aq(y.size());
  for (int iter = 0; iter < 300 && gamma > 1e-20 * gamma0; ++iter) {
    for (std::size_t t = 0; t < k; ++t) dir[t].value = p[t];
    op.forward_sparse(dir, aq);
    double qq = 0.0;
    for (double v : aq) qq += v * v;
    if (!(qq > 0.0)) break;
    const double alpha = gamma / qq;
    for (std::size_t t = 0; t < k; ++t) support[t].value += alpha * p[t];
    for (std::size_t i = 0; i < y.size(); ++i) residual[i] -= alpha * aq[i];
    op.adjoint_on_support(residual, support, s);
    double gamma_next = 0.0;
    for (double v : s) gamma_next += v * v;
    const double beta = gamma_next / gamma;
    gamma = gamma_next;
    for (std::size_t t = 0; t < k; ++t) p[t] = s[t] + beta * p[t];
  }

  for (const SparseEntry& e : support) x[e.u + e.v * op.n()] = e.value;
}

}  // namespace

double objective(const SensingOperator& op, std::span<const double> y, std::span<const double> x,
                 double tau) {
  if (y.size() != op.m() || x.size() != op.joint_dim())
    throw std::invalid_argument("objective: dimension mismatch");
  const std::vector<double> ax = op.forward(x);
  return objective_from_residual(ax, y, x, tau);
}

double auto_tau(const SensingOperator& op, std::span<const double> y) {
  if (y.empty()) throw std::invalid_argument("auto_tau: empty measurement vector");
  const std::vector<double> g = op.adjoint(y);
  double peak = 0.0;
  for (double v : g) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) throw std::invalid_argument("auto_tau: no signal in measurements");
  return 0.05 * peak;
}

double kkt_residual(const SensingOperator& op, std::span<const double> y,
                    std::span<const double> x, double tau) {
  std::vector<double> ax = op.forward(x);
  for (std::size_t i = 0; i < ax.size(); ++i) ax[i] -= y[i];
  const std::vector<double> grad = op.adjoint(ax);
  double res = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double stat = grad[j] + tau;
    if (x[j] > 0.0)
      res = std::max(res, std::abs(stat));
    else
      res = std::max(res, std::max(0.0, -stat));
  }
  return res;
}

ReconResult solve_bpdn(const SensingOperator& op, const MeasurementRecord& record,
                       const SolverConfig& config) {
  config.validate();
  if (record.y.size() != op.m()) throw std::invalid_argument("solve_bpdn: record/operator mismatch");
  const std::vector<double> y = to_double(record.y);
  for (double v : y)
    if (!std::isfinite(v)) throw std::invalid_argument("solve_bpdn: non-finite measurements");

  const std::size_t dim = op.joint_dim();
  ReconResult result;
  result.x_hat.assign(dim, 0.0);

  const bool all_zero = std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; });
  if (all_zero) {
    result.tau_used = config.tau > 0.0 ? config.tau : 0.0;
    result.converged = true;
    result.objective_history = {0.0};
    return result;
  }

  const double tau = config.tau > 0.0 ? config.tau : auto_tau(op, y);
  result.tau_used = tau;

  std::vector<double> x(dim, 0.0);
  std::vector<double> ax(op.m(), 0.0);
  std::vector<double> grad(dim), next_grad(dim), cand(dim), cand_ax(op.m()), diff(op.m());

  auto smooth_gradient = [&](const std::vector<double>& axv, std::vector<double>& out) {
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = axv[i] - y[i];
    op.adjoint(diff, out);
  };

  double obj = objective_from_residual(ax, y, x, tau);
  result.objective_history.push_back(obj);
  smooth_gradient(ax, grad);

  double alpha = 1.0;
  {
    // Scale the first step so it moves by about one unit of the gradient.
    double gmax = 0.0;
    for (double v : grad) gmax = std::max(gmax, std::abs(v));
    if (gmax > 0.0) alpha = 1.0 / gmax;
  }

  bool converged = false;
  std::size_t iter = 0;
  for (; iter < config.max_iters; ++iter) {
    double step = alpha;
    double cand_obj = 0.0;
    bool decreased = false;
    for (int bt = 0; bt < 60; ++bt) {
      if (config.nonneg) {
        for (std::size_t j = 0; j < dim; ++j)
          cand[j] = std::max(0.0, x[j] - step * (grad[j] + tau));
      } else {
        for (std::size_t j = 0; j < dim; ++j) {
          const double z = x[j] - step * grad[j];
          const double mag = std::abs(z) - step * tau;
          cand[j] = mag > 0.0 ? (z > 0.0 ? mag : -mag) : 0.0;
        }
      }
      op.forward(cand, cand_ax);
      cand_obj = objective_from_residual(cand_ax, y, cand, tau);
      if (cand_obj <= obj + 1e-12) {
        decreased = true;
        break;
      }
      step *= 0.5;
    }
    if (!decreased) break;  // backtracking floor: keep the best iterate

    // Barzilai-Borwein step from the accepted move.
    double dx_dx = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = cand[j] - x[j];
      dx_dx += d * d;
    }
    smooth_gradient(cand_ax, next_grad);
    double dx_dg = 0.0;
    for (std::size_t j = 0; j < dim; ++j) dx_dg += (cand[j] - x[j]) * (next_grad[j] - grad[j]);
    if (dx_dg > 0.0) alpha = std::clamp(dx_dx / dx_dg, 1e-30, 1e30);

    x.swap(cand);
    ax.swap(cand_ax);
    grad.swap(next_grad);

    const double prev = obj;
    obj = cand_obj;
    result.objective_history.push_back(obj);
    if (prev - obj <= config.rel_obj_tol * std::abs(prev)) {
      converged = true;
      ++iter;
      break;
    }
  }

  result.iterations = iter;
  result.converged = converged;
  result.x_hat = std::move(x);

  if (config.debias) debias_on_support(op, y, result.x_hat);
  return result;
}

JointDistribution normalize(const std::vector<double>& x_hat, const GridSpec& grid_signal,
                            const GridSpec& grid_idler, Basis basis, NormalizeMode mode,
                            double flux) {
  JointDistribution joint;
  joint.grid_signal = grid_signal;
  joint.grid_idler = grid_idler;
  joint.basis = basis;
  joint.x = x_hat;
  if (mode == NormalizeMode::per_flux) {
    if (!(flux > 0.0)) throw std::invalid_argument("normalize: flux must be positive");
    for (double& v : joint.x) v /= flux;
  }
  double total = 0.0;
  for (double& v : joint.x) {
    if (v < 0.0) v = 0.0;  // residual negatives from a signed or debiased fit
    total += v;
  }
  if (!(total > 0.0)) throw std::invalid_argument("normalize: all-zero reconstruction");
  for (double& v : joint.x) v /= total;
  return joint;
}

}  // namespace dpcam
