#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "demd/graph.hpp"
#include "demd/lowrank.hpp"
#include "demd/multiscale.hpp"
#include "demd/oracle.hpp"

namespace demd {

using StageTimings = std::vector<std::pair<std::string, double>>;

struct KernelOptions {
  int knn = 10;                     // 0 keeps every pair
  std::optional<double> epsilon;    // fixed bandwidth; adaptive kNN scales when unset
  std::optional<double> truncate;   // only with knn = 0
};

AffinityKernel build_kernel(const PointCloud& points, const KernelOptions& options);

struct EngineOptions {
  int gamma = 0;                    // ID reduction threshold; 0 selects n / 10
  std::uint64_t seed = 0x1d;
  int spectral_rank = 0;            // 0 keeps the spectral_decompose default
};

struct EmbeddingRun {
  MultiscaleEmbedding embedding;
  ScaleStack stack;
  RankProfile profile;              // filled by the ID engine
  std::vector<std::string> warnings;
  StageTimings timings;
};

/// Runs the engine named by config.method, then subsampling when
/// config.subsample is set. A precomputed spectrum is reused when given.
EmbeddingRun compute_embedding(const AffinityKernel& kernel, const DistributionSet& dist, const EmbedConfig& config,
                               const EngineOptions& engine = {}, const SpectralCache* spectrum = nullptr);

struct MethodMetrics {
  std::string benchmark;
  std::string method;
  int n = 0;
  int m = 0;
  double p_at_10 = 0.0;
  double spearman = 0.0;
  int violations = -1;              // line only: monotonicity breaks from the center
  std::size_t centers = 0;
  double seconds = 0.0;
  Matrix distances;                 // m x m
};

struct SwissRollOptions {
  int m = 100;
  int per = 100;
  double noise = 2.0;
  std::uint64_t seed = 1;
  bool rotate = false;
  int knn = 10;
  EmbedConfig config;               // method and subsample are set per row
  EngineOptions engine;
  std::vector<std::string> methods{"chebyshev", "id", "subsample"};
};

struct SwissRollReport {
  Matrix oracle;                    // m x m exact EMD on unrolled coordinates
  std::vector<MethodMetrics> rows;
  StageTimings timings;
};

/// Exact EMD between every pair of blobs with Euclidean costs on the
/// unrolled coordinates.
Matrix swiss_roll_oracle(const SwissRoll& roll, int m, int per);

/// Methods: exact, chebyshev, id, subsample (Chebyshev levels, top scales).
SwissRollReport run_swiss_roll_benchmark(const SwissRollOptions& options);

struct LineOptions {
  int n = 500;
  double epsilon = 5e-5;
  int sample = 100;                 // nodes in the rank-correlation subsample
  std::uint64_t seed = 1;
  double mix_tol = 1e-3;            // K from default_max_scale when config.max_scale is 0
  EmbedConfig config;
  std::vector<std::string> methods{"exact", "chebyshev"};
};

struct LineReport {
  Vector positions;                 // grid x_i
  std::vector<Vector> from_center;  // per method, distance to the point mass at 0.5
  IndexList sample;
  int max_scale = 0;
  std::vector<MethodMetrics> rows;
  StageTimings timings;
};

/// Indicator of each grid node plus a point mass at x = 0.5, split linearly
/// between its two neighbouring nodes when 0.5 is not on the grid.
DistributionSet line_distributions(const Vector& positions);

/// Breaks of strict increase of d along distinct |x - 0.5| levels.
int monotonicity_violations(const Vector& positions, const Vector& d);

LineReport run_line_benchmark(const LineOptions& options);

}  // namespace demd
