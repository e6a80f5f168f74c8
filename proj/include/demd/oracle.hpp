#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "demd/graph.hpp"
#include "demd/types.hpp"

namespace demd {

struct CostMatrix {
  Matrix costs;  // p x q ground distances
  std::string description;

  /// |x_i - y_j| on two position lists.
  static CostMatrix absolute_difference(const Vector& x, const Vector& y);
  /// Euclidean distances between the rows of a and b.
  static CostMatrix euclidean(const Matrix& a, const Matrix& b);
};

/// Masses are scaled to integers summing to this before the flow solve.
inline constexpr std::int64_t kMassScale = 1000000000;

/// Optimal transport cost between mu (length p) and nu (length q) by network
/// simplex on the bipartite transportation graph. Masses are normalized and
/// rounded to multiples of 1/kMassScale by largest remainder, so instances
/// already on that grid are solved exactly up to floating-point cost sums.
double exact_emd(const Vector& mu, const Vector& nu, const CostMatrix& costs);

/// Closed-form 1D transport cost: sum of |CDF_mu - CDF_nu| times the gaps of
/// the sorted positions.
double exact_emd_1d(const Vector& positions, const Vector& mu, const Vector& nu);

/// Mean over queries of |top-k(predicted) & top-k(truth)| / k.
double precision_at_k(const std::vector<IndexList>& predicted, const std::vector<IndexList>& truth, int k);

/// Ranks starting at 1; tied values share the mean of their positions.
Vector average_ranks(const Vector& values);

/// Pearson correlation of average ranks. Throws InvalidInput on constant
/// input, where the correlation is undefined.
double spearman_rho(const Vector& a, const Vector& b);

/// Upper-triangle entries (i < j) of a square matrix, row by row.
Vector upper_triangle(const Matrix& d);

struct SwissRoll {
  PointCloud points;     // ambient coordinates, 3D or rotated 10D
  Matrix unrolled;       // n x 2 flat coordinates (arc length, height)
  Matrix centers;        // m x 2 blob centers in flat coordinates
  Vector angle;          // spiral parameter t per point
};

/// Spiral arc length from the origin, s(t) = (t sqrt(1 + t^2) + asinh t) / 2.
double swiss_roll_arclength(double t);
/// Inverse of swiss_roll_arclength by Newton iteration.
double swiss_roll_angle(double s);

/// m Gaussian blobs of points_per points each on the roll t in [1.5 pi, 4.5 pi],
/// height in [0, 21]. Centers are uniform in flat coordinates and noise is
/// isotropic there, so flat Euclidean distance is the geodesic distance.
SwissRoll generate_swiss_roll(int m, int points_per, double noise, std::uint64_t seed, bool rotate_10d = false);

/// n equispaced points on [0, 1]; point i carries label i.
PointCloud generate_line_graph(int n);

}  // namespace demd
