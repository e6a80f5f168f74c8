#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "demd/types.hpp"

namespace demd {

/// n points in d dimensions, each tagged with the id of the distribution
/// (dataset) it was sampled from.
struct PointCloud {
  Matrix coords;            // n x d
  std::vector<int> labels;  // length n, values in [0, num_distributions)
  int num_distributions = 0;

  /// Validates finiteness and that every distribution id in [0, m) occurs.
  /// When m is omitted it is inferred as max(label) + 1.
  static PointCloud create(Matrix coords, std::vector<int> labels,
                           std::optional<int> m = std::nullopt);

  int size() const { return static_cast<int>(coords.rows()); }
  int dim() const { return static_cast<int>(coords.cols()); }
};

enum class KernelKind {
  dense_gaussian,      // every pair kept; differentiable in the coordinates
  truncated_gaussian,  // pairs below a threshold dropped
  knn,                 // restricted to symmetrized k-nearest neighbours
};

/// How the Gaussian scale is chosen for kNN kernels.
struct BandwidthRule {
  enum class Kind { fixed, adaptive };
  Kind kind = Kind::adaptive;
  double value = 1.0;  // epsilon for fixed, percentile in (0, 1] for adaptive

  static BandwidthRule fixed(double epsilon) { return {Kind::fixed, epsilon}; }
  static BandwidthRule adaptive(double percentile = 1.0) { return {Kind::adaptive, percentile}; }
};

/// Symmetric nonnegative affinity matrix with unit diagonal.
struct AffinityKernel {
  SparseMatrix weights;
  KernelKind kind = KernelKind::dense_gaussian;
  /// Fixed bandwidth (squared ambient units); zero when adaptive.
  double epsilon = 0.0;
  /// Per-node scales sigma_i when adaptive; entry (i,j) uses sigma_i*sigma_j.
  Vector scales;

  int size() const { return static_cast<int>(weights.rows()); }
};

/// exp(-|x_i - x_j|^2 / epsilon) over all pairs. With a truncation t, entries
/// below t are dropped; the result is symmetric by construction.
AffinityKernel gaussian_affinity(const PointCloud& points, double epsilon,
                                 std::optional<double> truncation = std::nullopt);

/// Gaussian affinities on the union of each point's k nearest neighbours.
AffinityKernel knn_affinity(const PointCloud& points, int k, const BandwidthRule& rule);

/// Same construction driven by a precomputed symmetric distance matrix.
AffinityKernel knn_affinity_from_distances(const Matrix& distances, int k,
                                           const BandwidthRule& rule);

/// k nearest neighbours of every row (self excluded), ties broken by lower
/// index. Returns n lists of (index, squared distance) sorted ascending.
std::vector<std::vector<std::pair<int, double>>> nearest_neighbors(const Matrix& coords, int k);

struct ConnectivityReport {
  int num_components = 0;
  std::vector<int> component;  // component id per node
  std::vector<int> sizes;

  bool connected() const { return num_components == 1; }
};

ConnectivityReport connected_components(const SparseMatrix& adjacency);

/// Anisotropically normalized Markov operator.
///
///   K_norm = Q^-1 K Q^-1,  Q = diag(K 1)
///   D      = diag(K_norm 1)
///   S      = D^-1/2 K_norm D^-1/2  (symmetric conjugate)
///   P      = D^-1 K_norm = D^-1/2 S D^1/2
///
/// P is never formed; apply() evaluates D^-1/2 S (D^1/2 v). Sparse products
/// are computed row by row in storage order, so results are independent of
/// the worker count.
class DiffusionOperator {
 public:
  DiffusionOperator() = default;

  int size() const { return static_cast<int>(sym_.rows()); }
  const SparseMatrix& kernel_norm() const { return kernel_norm_; }
  const Vector& q() const { return q_; }
  const Vector& deg() const { return deg_; }
  const SparseMatrix& sym() const { return sym_; }
  const Vector& sqrt_deg() const { return sqrt_deg_; }
  const Vector& inv_sqrt_deg() const { return inv_sqrt_deg_; }
  const ConnectivityReport& connectivity() const { return connectivity_; }

  /// P v
  Vector apply(const Vector& v) const;
  /// P X for an n x m block.
  RowMatrix apply(const RowMatrix& x) const;
  /// Dense P; intended for small graphs and tests.
  Matrix transition_dense() const;

 private:
  friend DiffusionOperator build_diffusion_operator(const AffinityKernel& kernel);

  SparseMatrix kernel_norm_;
  SparseMatrix sym_;
  Vector q_, deg_, sqrt_deg_, inv_sqrt_deg_;
  ConnectivityReport connectivity_;
};

/// Throws DegenerateNode when a kernel row has no mass.
DiffusionOperator build_diffusion_operator(const AffinityKernel& kernel);

/// pi_i = deg_i / sum_j deg_j; a stationary distribution in every case.
Vector stationary_distribution(const DiffusionOperator& op);
/// Stationary distribution normalized within each connected component.
Vector stationary_distribution_per_component(const DiffusionOperator& op);

struct SpectralOptions {
  int dense_cutoff = 2000;    // full dense decomposition at or below this size
  int iterative_rank = 500;   // r = min(n - 1, iterative_rank) above the cutoff
  int max_krylov = 0;         // Lanczos basis size; 0 selects min(n, max(2r + 1, r + 100))
  int max_restarts = 300;
  std::uint64_t seed = 0x5eed;
};

/// Leading eigenpairs of the symmetric conjugate S, ordered by decreasing
/// magnitude (lambda_0 = 1 first on a connected graph).
struct SpectralCache {
  Vector eigenvalues;
  Matrix eigenvectors;  // n x r, orthonormal columns
  /// True when every eigenpair of S is present.
  bool complete = false;

  int rank() const { return static_cast<int>(eigenvalues.size()); }
};

/// Dense decomposition when n <= dense_cutoff, Lanczos otherwise. Throws
/// NumericalFailure when the iterative solver cannot reach tol.
SpectralCache spectral_decompose(const DiffusionOperator& op, std::optional<int> rank = std::nullopt,
                                 double tol = 1e-8, const SpectralOptions& options = {});

/// Largest-magnitude eigenpairs of a sparse symmetric matrix by implicitly
/// restarted Lanczos (ARPACK). tol bounds each residual relative to |lambda|.
SpectralCache lanczos_top_eigenpairs(const SparseMatrix& a, int rank, double tol,
                                     const SpectralOptions& options = {});

/// y = A x with rows of y computed independently.
void sparse_times(const SparseMatrix& a, const RowMatrix& x, RowMatrix& y);
Vector sparse_times(const SparseMatrix& a, const Vector& x);

/// Reverse Cuthill-McKee order of the sparsity pattern: order[new] = old.
IndexList bandwidth_order(const SparseMatrix& a);

}  // namespace demd
