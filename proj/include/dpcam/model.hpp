#pragma once

#include <string>
#include <vector>

#include "dpcam/types.hpp"

namespace dpcam {

// Per-axis pixel-pair kernel K[i + j*side]: the joint mass of signal pixel i
// and idler pixel j for one transverse axis, integrated over both pixels with
// tensor Gauss-Legendre quadrature (quad_nodes points per axis per pixel).
// Not normalized.
std::vector<double> axis_kernel(const BiphotonParams& params, const GridSpec& grid,
                                int quad_nodes = 16);

// Discretized joint distributions over 2D pixel pairs. The model is a product
// of identical per-axis factors, so the 2D table is the tensor square of the
// 1D kernel, renormalized to unit sum.
JointDistribution position_joint_pdf(const BiphotonParams& params, const GridSpec& grid,
                                     int quad_nodes = 16);
JointDistribution momentum_joint_pdf(const BiphotonParams& params, const GridSpec& grid,
                                     int quad_nodes = 16);

enum class Party { signal, idler };

// p(u) = sum_v p(u,v) (or the v-marginal for Party::idler).
std::vector<double> marginal(const JointDistribution& joint, Party party);

enum class Dims { one, two };

// log2 of the squared width ratio; doubled for two transverse dimensions.
double fedorov_capacity(const BiphotonParams& params, Dims dims);

void save_joint(const JointDistribution& joint, const BiphotonParams& params,
                const std::string& path);
JointDistribution load_joint(const std::string& path, BiphotonParams* params_out = nullptr);

}  // namespace dpcam
