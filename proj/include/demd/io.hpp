#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "demd/graph.hpp"
#include "demd/gradient.hpp"
#include "demd/lowrank.hpp"
#include "demd/metric.hpp"
#include "demd/multiscale.hpp"

namespace demd::io {

/// Point CSV: header `x0,...,x{d-1},label`, one point per row.
PointCloud parse_points_csv(std::istream& in);
PointCloud read_points_csv(const std::filesystem::path& path);
void write_points_csv(const std::filesystem::path& path, const PointCloud& points);

/// Binary matrix: "DEMD", u32 rows, u32 cols, u32 reserved (0), then
/// row-major little-endian f64.
inline constexpr char kMagic[4] = {'D', 'E', 'M', 'D'};
void write_matrix_binary(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_binary(const std::filesystem::path& path);

/// Plain `key=value` lines; blank lines and lines starting with # are skipped.
std::map<std::string, std::string> parse_key_value(std::istream& in);
std::map<std::string, std::string> read_key_value(const std::filesystem::path& path);

/// Sidecar path for an embedding file: `<path>.meta`.
std::filesystem::path metadata_path(const std::filesystem::path& embedding);

/// Bins as a binary matrix plus the sidecar with alpha, K, J, method, and
/// per-block scale, offset, length, weight and centers.
void write_embedding(const std::filesystem::path& path, const MultiscaleEmbedding& embedding);
MultiscaleEmbedding read_embedding(const std::filesystem::path& path);

/// Dense CSV, header = sample ids 0..m-1.
void write_distances_csv(const std::filesystem::path& path, const Matrix& distances);
Matrix read_distances_csv(const std::filesystem::path& path);

/// `query,rank,neighbor,distance`, rank starting at 1. distances[q][r] goes
/// with neighbors[q][r].
void write_neighbors_csv(const std::filesystem::path& path, const std::vector<IndexList>& neighbors,
                         const std::vector<std::vector<double>>& distances);

/// `scale,rank,basis_size`.
void write_rank_profile_csv(const std::filesystem::path& path, const RankProfile& profile);

struct OracleRow {
  int pair_i = 0;
  int pair_j = 0;
  double exact = 0.0;
  double approx = 0.0;
};

/// `pair_i,pair_j,exact,approx`.
void write_oracle_csv(const std::filesystem::path& path, const std::vector<OracleRow>& rows);

/// `node,coordinate,analytic,numeric,relative_error,tolerance,passed`, one row per coordinate.
void write_gradient_csv(const std::filesystem::path& path, const std::vector<GradientReport>& reports);

/// Shortest round-trip decimal form of a double.
std::string format_double(double x);

}  // namespace demd::io
