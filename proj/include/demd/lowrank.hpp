#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "demd/graph.hpp"
#include "demd/multiscale.hpp"
#include "demd/types.hpp"

namespace demd {

/// A ~= B C with B a subset of the columns of A.
struct IDFactors {
  Matrix columns;         // B, m x k: columns A(:, selected)
  Matrix coefficients;    // C, k x n in the original column order
  IndexList selected;     // k column ids, in pivot order
  IndexList permutation;  // full pivot order of the QR; selected is its prefix
  int requested_rank = 0; // k asked for; rank() is smaller after a singular R11

  int rank() const { return static_cast<int>(selected.size()); }
};

/// Deterministic ID from a column-pivoted QR. C holds the identity on the
/// selected columns and R11^-1 R12 elsewhere. When R11 is numerically
/// singular k is reduced to the numerical rank (at least 1).
IDFactors interpolative_decomposition(const Matrix& a, int k);

/// Column selection and coefficients of a randomized ID, with B left to the
/// caller. sketch(G1) must return G1 A for a j x rows Gaussian G1.
struct SketchedID {
  IndexList selected;   // pivot order
  Matrix coefficients;  // k x cols
  int attempts = 1;
};

SketchedID randomized_id_sketch(int rows, int cols, const std::function<Matrix(const Matrix&)>& sketch, int j,
                                int k, int l, std::uint64_t seed);

/// Randomized ID: sketch W = G1 A, deterministic ID of W, then index recovery
/// through a second sketch G2 W. Requires min(m, n) > j > k > l >= 0; l = 0
/// skips the recovery check. Recovery mismatches are retried with fresh
/// randomness up to three times before NumericalFailure.
IDFactors randomized_id(const Matrix& a, int j, int k, int l, std::uint64_t seed);

/// #{i : |lambda_i|^power >= delta}
int approximate_rank(const Vector& eigenvalues, double delta, double power);

struct RankProfile {
  struct Entry {
    int scale = 0;
    int rank = 0;        // R_delta at 2^scale; a lower bound when the cache saturates
    int basis_size = 0;  // n_k
    bool rank_known = true;
  };
  std::vector<Entry> entries;
};

struct IDEmbeddingResult {
  MultiscaleEmbedding embedding;
  ScaleStack stack;
  RankProfile profile;
  std::vector<std::string> warnings;
};

/// Dyadic diffusion on a shrinking interpolative basis. While no reduction
/// has happened the operator is S^(2^k) itself and is applied by repeated
/// sparse products. A reduction at scale k (rank R < gamma) takes a
/// randomized ID of the current operator with (j, k, l) = (R + 8, R,
/// min(5, R - 1)), keeps the selected nodes as the new basis and continues
/// squaring on it:
///
///   S^(2^(k-1)) ~= C^T G C,  Gamma = C C^T,  S^(2^k) ~= C^T (G Gamma G) C
///
/// The stationary eigenvector phi of S is deflated before squaring and added
/// back to the values, D_J^-1/2 (G_k c + phi_J phi^T D^1/2 mu). Each basis
/// node is weighted by the number of nodes whose largest interpolation
/// coefficient falls on it. gamma = 0 never reduces.
/// Eigenvalues of spectrum (computed when null) drive the rank estimates.
IDEmbeddingResult id_diffusion_embedding(const AffinityKernel& kernel, const DistributionSet& dist,
                                         const EmbedConfig& config, int gamma, std::uint64_t seed = 0x1d,
                                         const SpectralCache* spectrum = nullptr);

enum class CenterRule {
  operator_rows,     // row ID of P^(2^k) through its spectral factor
  level_values,      // ID of the level's m x n value matrix
};

struct SubsampleOptions {
  double delta = 1e-6;
  int n_scales_kept = 0;  // 0 keeps every scale
  CenterRule rule = CenterRule::operator_rows;
};

/// Keeps R_delta(|lambda|^(2^k)) centers per scale, chosen by ID, nested so
/// that every scale's centers contain the next coarser scale's. Optionally
/// drops all but the n_scales_kept largest scales. delta = 0 keeps all
/// centers. Each kept center is weighted by the number of nodes whose largest
/// coefficient in the min-norm row interpolation P^(2^k) ~ B P^(2^k)[J,:]
/// falls on it.
ScaleStack subsample_embedding(const ScaleStack& stack, const SpectralCache& spectrum,
                               const DiffusionOperator& op, const SubsampleOptions& options);

}  // namespace demd
