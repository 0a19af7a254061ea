#pragma once

#include <vector>

#include "proxbundle/error.hpp"

namespace proxbundle {

/// Result of the proximal master problem
///   min_x  model(x) + (rho/2)||x - center||^2.
struct ProxSolution {
  Vector z_next;      ///< unique minimizer
  double model_val{};  ///< model(z_next)
  double eta{};        ///< optimal value: model_val + (rho/2)||z_next - center||^2
  Vector s;            ///< aggregate subgradient -rho (z_next - center)
  /// Simplex weights, one per model piece in CuttingPlaneModel::piece order.
  /// Empty when produced by the grid oracle.
  std::vector<double> multipliers;
  double kkt_residual{};  ///< relative, max of stationarity/feasibility/complementarity
  int inner_iterations{};
};

}  // namespace proxbundle
