#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "demd/graph.hpp"
#include "demd/types.hpp"

namespace demd {

/// m probability measures on the n graph nodes, one per column.
struct DistributionSet {
  Matrix measures;          // n x m, nonnegative, columns sum to 1
  std::vector<int> counts;  // n_i; 1 for measures not built from indicators

  int num_nodes() const { return static_cast<int>(measures.rows()); }
  int num_distributions() const { return static_cast<int>(measures.cols()); }

  /// Validates nonnegativity and unit column mass (within 1e-12).
  static DistributionSet from_measures(Matrix measures);
};

/// Column i is the normalized indicator 1_{X_i} / n_i.
DistributionSet indicator_distributions(const std::vector<int>& labels, int m);

/// One dyadic scale: the diffusion mu^(2^k) sampled at a set of centers.
struct ScaleLevel {
  int scale = 0;      // k, diffusion time 2^k
  IndexList centers;  // node ids, ascending
  Matrix values;      // centers.size() x m
  /// L1 mass each center stands for when the level is sampled on a subset;
  /// empty means 1 per center.
  Vector weights;

  double weight(std::size_t i) const { return weights.size() ? weights(static_cast<Eigen::Index>(i)) : 1.0; }
};

/// Levels for consecutive scales first_scale() .. max_scale().
struct ScaleStack {
  std::vector<ScaleLevel> levels;

  int first_scale() const { return levels.empty() ? 0 : levels.front().scale; }
  int max_scale() const { return levels.empty() ? -1 : levels.back().scale; }
  int num_distributions() const { return levels.empty() ? 0 : static_cast<int>(levels.front().values.cols()); }
  std::size_t total_centers() const;
};

enum class EmbedMethod { exact_spectral, chebyshev, interpolative };

std::string to_string(EmbedMethod method);
EmbedMethod parse_embed_method(const std::string& name);

struct EmbedConfig {
  double alpha = 0.5;         // snowflake exponent, (0, 1/2]
  int max_scale = 0;          // K; 0 selects max(ceil(log2 n), 8)
  int cheb_order = 32;        // J
  int n_scales_kept = 6;
  double rank_delta = 1e-6;   // delta
  bool subsample = false;     // keep only ID-selected centers on the top scales
  EmbedMethod method = EmbedMethod::chebyshev;

  /// Throws InvalidParameter for out-of-range fields.
  void validate() const;
  /// K to use on an n-node graph.
  int resolved_max_scale(int n) const;
};

/// max(ceil(log2 n), 8)
int default_max_scale_for_size(int n);

struct ScaleBlock {
  int scale = 0;         // k
  std::size_t offset = 0;
  std::size_t length = 0;
  double weight = 1.0;   // 2^{-(K-k-1) alpha} for k < K, 1 for k = K
  IndexList centers;
};

/// Rows are distributions; L1 distance between rows is the Diffusion EMD.
struct MultiscaleEmbedding {
  Matrix bins;  // m x L
  EmbedConfig config;
  std::vector<ScaleBlock> blocks;

  int num_distributions() const { return static_cast<int>(bins.rows()); }
};

/// Level k holds P^(2^k) mu: level 0 by one sparse application of P, higher
/// levels through the spectral cache. Requires a complete cache, or one whose
/// smallest retained |lambda|^2 is at most truncation_tol.
ScaleStack diffuse_dyadic_exact(const DiffusionOperator& op, const SpectralCache& spectrum,
                                const DistributionSet& dist, int max_scale,
                                double truncation_tol = 1e-12);

/// Coefficients c_0..c_J of sigma^power in the Chebyshev basis on [-1, 1],
/// by Gauss-Chebyshev quadrature at J+1 nodes. c_0 already carries the 1/2
/// factor, so sigma^power ~ sum_j c_j T_j(sigma).
Vector chebyshev_coefficients(long long power, int order);

/// Filters D^1/2 mu by the Chebyshev expansion of sigma^(2^k) in S for all
/// k = 0..K at once, sharing one three-term recurrence (J products with S
/// per distribution).
ScaleStack diffuse_dyadic_chebyshev(const DiffusionOperator& op, const DistributionSet& dist,
                                    int max_scale, int order);

/// Concatenates weighted difference blocks. Block k < K holds
/// 2^{-(K-k-1) alpha} (mu^(2^{k+1}) - mu^(2^k)) on the centers of level k+1,
/// block K holds mu^(2^K). Level k+1 centers must be a subset of level k's.
/// Each entry is also scaled by its center weight.
MultiscaleEmbedding assemble_embedding(const ScaleStack& stack, double alpha, int max_scale);

/// Smallest K with |lambda_1|^(2^K) <= mix_tol * min_sqrt_pi, clamped to
/// [8, ceil(log2 n) + 4].
int max_scale_from_gap(double lambda1, double min_sqrt_pi, double mix_tol, int n);

/// max_scale_from_gap evaluated per connected component; returns the largest.
int default_max_scale(const DiffusionOperator& op, double mix_tol);

/// Full pipeline for the exact and Chebyshev engines.
MultiscaleEmbedding embed_distributions(const DiffusionOperator& op, const DistributionSet& dist,
                                        const EmbedConfig& config,
                                        const SpectralCache* spectrum = nullptr);

}  // namespace demd
