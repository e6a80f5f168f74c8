#pragma once

#include <functional>
#include <vector>

#include "demd/graph.hpp"
#include "demd/multiscale.hpp"
#include "demd/types.hpp"

namespace demd {

/// Dense-mode limit for gradients.
inline constexpr int kGradientMaxNodes = 500;

/// dK/dx_{v,c} for every coordinate c of node v, as dense n x n matrices.
/// Only row v and column v are nonzero. The kernel must be an untruncated
/// Gaussian built from the same points.
std::vector<Matrix> grad_affinity(const PointCloud& points, const AffinityKernel& kernel, int v);

struct EmdGradient {
  Vector gradient;          // length d
  bool subgradient = false; // some embedding coordinate of the difference was exactly zero
};

/// Gradient of W(X_i, X_j) with respect to the coordinates of node v, through
/// the dense Gaussian kernel (bandwidth epsilon), the anisotropic
/// normalization and the dyadic powers of P. Uses sign(0) = 0.
EmdGradient grad_diffusion_emd(const PointCloud& points, double epsilon, const EmbedConfig& config,
                               const DistributionSet& dist, int i, int j, int v);

/// W(X_i, X_j) evaluated densely: Gaussian kernel, P, squaring for the
/// dyadic powers. Same definition the gradient differentiates.
double dense_diffusion_emd(const Matrix& coords, double epsilon, const EmbedConfig& config,
                           const DistributionSet& dist, int i, int j);

/// Central differences of f with respect to row v of coords.
Vector central_difference(const std::function<double(const Matrix&)>& f, const Matrix& coords, int v,
                          double step);

struct GradientReport {
  int node = 0;
  Vector analytic;
  Vector numeric;
  double max_relative_error = 0.0;  // |a - n|_inf / max(|n|_inf, 1e-12)
  double tolerance = 1e-4;
  bool subgradient = false;
  bool passed = false;
};

double relative_error(const Vector& analytic, const Vector& numeric);

GradientReport finite_difference_check(const PointCloud& points, double epsilon, const EmbedConfig& config,
                                       const DistributionSet& dist, int i, int j, int v, double step,
                                       double tolerance = 1e-4);

}  // namespace demd
