#include "dpcam/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

namespace dpcam {

void JointDistribution::validate(double tol) const {
  const std::size_t dim = n();
  if (x.size() != dim * dim) throw std::invalid_argument("joint distribution has wrong size");
  double total = 0.0;
  for (double v : x) {
    if (v < 0.0) throw std::invalid_argument("joint distribution has negative entries");
    total += v;
  }
  if (std::abs(total - 1.0) > tol)
    throw std::invalid_argument("joint distribution is not unit-normalized");
}

namespace {

void gauss_legendre(int q, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(q, 0.0);
  weights.assign(q, 0.0);
  for (int i = 0; i < (q + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (q + 0.5));
    double p0 = 0.0, dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      p0 = 1.0;
      double p1 = 0.0;
      for (int j = 0; j < q; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      dp = q * (x * p0 - p1) / (x * x - 1.0);
      const double step = p0 / dp;
      x -= step;
      if (std::abs(step) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[q - 1 - i] = x;
    weights[i] = weights[q - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

double pair_density(double s, double i, const BiphotonParams& p, Basis basis) {
  const double d = s - i;
  const double a = s + i;
  if (basis == Basis::position)
    return std::exp(-d * d / (2.0 * p.corr_width * p.corr_width) -
                    a * a / (8.0 * p.pump_width * p.pump_width));
  return std::exp(-2.0 * p.corr_width * p.corr_width * d * d -
                  8.0 * p.pump_width * p.pump_width * a * a);
}

void coverage_warnings(const BiphotonParams& params, const GridSpec& grid) {
  const double extent = static_cast<double>(grid.side) * grid.pitch;
  if (grid.basis == Basis::position) {
    if (extent < 4.0 * params.pump_width)
      std::cerr << "warning: position grid spans " << extent << " < 4*pump_width="
                << 4.0 * params.pump_width << "; distribution will be truncated\n";
  } else {
    if (extent < 1.0 / params.corr_width)
      std::cerr << "warning: momentum grid spans " << extent << " < 1/corr_width="
                << 1.0 / params.corr_width << "; distribution will be truncated\n";
  }
  if (params.corr_width < grid.pitch / 100.0)
    std::cerr << "warning: corr_width far below pixel pitch; correlations unresolved\n";
}

JointDistribution build_joint(const BiphotonParams& params, const GridSpec& grid, Basis basis,
                              int quad_nodes) {
  params.validate();
  grid.validate();
  if (grid.basis != basis) throw std::invalid_argument("grid basis does not match requested joint");
  coverage_warnings(params, grid);

  const std::vector<double> kernel = axis_kernel(params, grid, quad_nodes);
  const std::size_t side = grid.side;
  double axis_sum = 0.0;
  for (double v : kernel) axis_sum += v;
  const double norm = axis_sum * axis_sum;
  if (!(norm > 0.0)) throw std::runtime_error("joint distribution vanished on this grid");

  JointDistribution joint;
  joint.grid_signal = grid;
  joint.grid_idler = grid;
  joint.basis = basis;
  const std::size_t n = side * side;
  joint.x.assign(n * n, 0.0);
  for (std::size_t ux = 0; ux < side; ++ux)
    for (std::size_t vx = 0; vx < side; ++vx) {
      const double kx = kernel[ux + vx * side];
      for (std::size_t uy = 0; uy < side; ++uy)
        for (std::size_t vy = 0; vy < side; ++vy) {
          const std::size_t u = pixel_index(ux, uy, side);
          const std::size_t v = pixel_index(vx, vy, side);
          joint.x[u + v * n] = kx * kernel[uy + vy * side] / norm;
        }
    }
  return joint;
}

}  // namespace

std::vector<double> axis_kernel(const BiphotonParams& params, const GridSpec& grid,
                                int quad_nodes) {
  params.validate();
  grid.validate();
  if (quad_nodes < 1) throw std::invalid_argument("quadrature needs at least one node");

  std::vector<double> nodes, weights;
  gauss_legendre(quad_nodes, nodes, weights);

  const std::size_t side = grid.side;
  const std::size_t q = static_cast<std::size_t>(quad_nodes);
  std::vector<double> pos(side * q), wt(side * q);
  for (std::size_t i = 0; i < side; ++i) {
    const double c = grid.center(i);
    for (std::size_t k = 0; k < q; ++k) {
      pos[i * q + k] = c + nodes[k] * grid.pitch / 2.0;
      wt[i * q + k] = weights[k] * grid.pitch / 2.0;
    }
  }

  std::vector<double> kernel(side * side, 0.0);
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) {
      double acc = 0.0;
      for (std::size_t ka = 0; ka < q; ++ka) {
        const double xs = pos[i * q + ka];
        const double ws = wt[i * q + ka];
        double inner = 0.0;
        for (std::size_t kb = 0; kb < q; ++kb)
          inner += wt[j * q + kb] * pair_density(xs, pos[j * q + kb], params, grid.basis);
        acc += ws * inner;
      }
      kernel[i + j * side] = acc;
    }
  return kernel;
}

JointDistribution position_joint_pdf(const BiphotonParams& params, const GridSpec& grid,
                                     int quad_nodes) {
  return build_joint(params, grid, Basis::position, quad_nodes);
}

JointDistribution momentum_joint_pdf(const BiphotonParams& params, const GridSpec& grid,
                                     int quad_nodes) {
  return build_joint(params, grid, Basis::momentum, quad_nodes);
}

std::vector<double> marginal(const JointDistribution& joint, Party party) {
  const std::size_t n = joint.n();
  std::vector<double> out(n, 0.0);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t u = 0; u < n; ++u) {
      const double p = joint.x[u + v * n];
      out[party == Party::signal ? u : v] += p;
    }
  return out;
}

double fedorov_capacity(const BiphotonParams& params, Dims dims) {
  params.validate();
  const double ratio = params.pump_width / params.corr_width;
  const double one_dim = std::log2(ratio * ratio);
  return dims == Dims::two ? 2.0 * one_dim : one_dim;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_joint(const JointDistribution& joint, const BiphotonParams& params,
                const std::string& path) {
  std::ostringstream out;
  out << "# side " << joint.side() << "\n";
  out << "# pitch " << format_double(joint.grid_signal.pitch) << "\n";
  out << "# basis " << basis_name(joint.basis) << "\n";
  out << "# origin " << format_double(joint.grid_signal.origin) << "\n";
  out << "# pump_width " << format_double(params.pump_width) << "\n";
  out << "# corr_width " << format_double(params.corr_width) << "\n";
  const std::size_t n = joint.n();
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      if (v) out << ',';
      out << format_double(joint.x[u + v * n]);
    }
    out << '\n';
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f << out.str();
  if (!f) throw io_error("failed writing " + path);
}

JointDistribution load_joint(const std::string& path, BiphotonParams* params_out) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open " + path);
  JointDistribution joint;
  BiphotonParams params{1.0, 1.0};
  std::string line;
  std::vector<double> values;
  std::size_t side = 0;
  double pitch = 1.0, origin = 0.0;
  Basis basis = Basis::position;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream h(line.substr(1));
      std::string key;
      h >> key;
      if (key == "side")
        h >> side;
      else if (key == "pitch")
        h >> pitch;
      else if (key == "origin")
        h >> origin;
      else if (key == "pump_width")
        h >> params.pump_width;
      else if (key == "corr_width")
        h >> params.corr_width;
      else if (key == "basis") {
        std::string b;
        h >> b;
        basis = basis_from_name(b);
      }
      continue;
    }
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
  }
  if (side == 0) throw io_error(path + ": missing side header");
  const std::size_t n = side * side;
  if (values.size() != n * n) throw io_error(path + ": wrong number of entries");
  joint.grid_signal = GridSpec{side, pitch, basis, origin};
  joint.grid_idler = joint.grid_signal;
  joint.basis = basis;
  joint.x.assign(n * n, 0.0);
  // file rows are fixed-u slices
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) joint.x[u + v * n] = values[u * n + v];
  if (params_out) *params_out = params;
  return joint;
}

}  // namespace dpcam
