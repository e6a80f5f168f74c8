#pragma once

#include <string>
#include <utility>
#include <vector>

#include "demd/graph.hpp"
#include "demd/multiscale.hpp"
#include "demd/types.hpp"

namespace demd {

struct DistanceMatrix {
  Matrix values;  // m x m, symmetric, zero diagonal
  std::string method;
  EmbedConfig config;

  int size() const { return static_cast<int>(values.rows()); }
};

/// L1 distance between two embedding rows, summed left to right.
double diffusion_emd(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b);

/// All-pairs L1 over embedding rows; entry (j, i) is a copy of (i, j).
DistanceMatrix pairwise_distances(const MultiscaleEmbedding& embedding);
/// Same for a raw m x L matrix of rows.
Matrix pairwise_l1(const Matrix& rows);

/// Exact k-nearest-neighbour search under L1 with a vantage-point tree.
/// Results equal brute force: ties in distance go to the lower index.
class MetricTree {
 public:
  explicit MetricTree(RowMatrix points);

  /// k nearest rows to row `query`, excluding itself.
  IndexList query(int query, int k) const;
  int size() const { return static_cast<int>(points_.rows()); }

 private:
  struct Node {
    int point = -1;
    double radius = 0.0;  // split distance: inside holds d <= radius
    int inside = -1;
    int outside = -1;
  };

  int build(std::vector<int>& ids, int begin, int end);
  double distance(int a, int b) const;

  RowMatrix points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Brute force up to this many rows, metric tree above.
inline constexpr int kBruteForceLimit = 10000;

/// k nearest rows to `query` by L1, self excluded, ties by lower index.
IndexList knn_query(const MultiscaleEmbedding& embedding, int query, int k);
/// Neighbour lists for every row.
std::vector<IndexList> knn_all(const Matrix& rows, int k);
/// Neighbour lists read off a distance matrix.
std::vector<IndexList> knn_from_distances(const Matrix& distances, int k);

/// Gaussian kernel between samples on their Diffusion EMD distances,
/// restricted to the symmetrized k nearest neighbours.
AffinityKernel sample_kernel(const DistanceMatrix& distances, int k, const BandwidthRule& rule);

}  // namespace demd
