#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpcam {

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Basis { position, momentum };

inline const char* basis_name(Basis b) {
  return b == Basis::position ? "position" : "momentum";
}

inline Basis basis_from_name(const std::string& s) {
  if (s == "position") return Basis::position;
  if (s == "momentum") return Basis::momentum;
  throw std::invalid_argument("unknown basis: " + s);
}

// Widths of the two Gaussian factors of the biphoton model, in the same
// length units as the grid pitch.
struct BiphotonParams {
  double pump_width;
  double corr_width;

  void validate() const {
    if (!(pump_width > 0.0) || !(corr_width > 0.0))
      throw std::invalid_argument("biphoton widths must be positive");
  }

  // Eq.-13-style capacity formulas assume a strongly correlated regime.
  bool fedorov_regime() const { return pump_width / corr_width >= 10.0; }
};

// Detector pixel grid for one transverse axis pair; n = side^2 pixels total.
struct GridSpec {
  std::size_t side = 0;
  double pitch = 1.0;
  Basis basis = Basis::position;
  double origin = 0.0;

  std::size_t n() const { return side * side; }

  void validate() const {
    if (side < 1) throw std::invalid_argument("grid side must be >= 1");
    if (!(pitch > 0.0)) throw std::invalid_argument("grid pitch must be positive");
  }

  // Center coordinate of 1D pixel index i.
  double center(std::size_t i) const {
    return origin + (static_cast<double>(i) - (static_cast<double>(side) - 1.0) / 2.0) * pitch;
  }
};

// Joint distribution p(u,v) over signal/idler pixel pairs, stored as its
// column-major vectorization x[u + v*n] so reshaping is a no-op.
struct JointDistribution {
  GridSpec grid_signal;
  GridSpec grid_idler;
  Basis basis = Basis::position;
  std::vector<double> x;

  std::size_t side() const { return grid_signal.side; }
  std::size_t n() const { return grid_signal.n(); }

  double& at(std::size_t u, std::size_t v) { return x[u + v * n()]; }
  double at(std::size_t u, std::size_t v) const { return x[u + v * n()]; }

  void validate(double tol = 1e-12) const;
};

// 2D pixel index convention: u = uy + ux*side (column-major over the image).
inline std::size_t pixel_index(std::size_t ux, std::size_t uy, std::size_t side) {
  return uy + ux * side;
}

}  // namespace dpcam
