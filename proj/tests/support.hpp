#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "demd/graph.hpp"

namespace testing_support {

inline demd::Matrix random_coords(int n, int d, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  demd::Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = normal(rng);
  return x;
}

inline demd::PointCloud random_cloud(int n, int d, int m, std::uint64_t seed, double scale = 1.0) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % m;
  return demd::PointCloud::create(random_coords(n, d, seed, scale), labels, m);
}

// Dense transition matrix built directly from the kernel formulas.
inline demd::Matrix dense_transition(const demd::Matrix& k) {
  const demd::Vector q = k.rowwise().sum();
  demd::Matrix knorm = q.cwiseInverse().asDiagonal() * k * q.cwiseInverse().asDiagonal();
  const demd::Vector d = knorm.rowwise().sum();
  return d.cwiseInverse().asDiagonal() * knorm;
}

inline demd::Matrix dense_gaussian(const demd::Matrix& x, double eps) {
  const int n = static_cast<int>(x.rows());
  demd::Matrix k(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) k(i, j) = std::exp(-(x.row(i) - x.row(j)).squaredNorm() / eps);
  return k;
}

// Path graph with unit affinities and unit diagonal.
inline demd::AffinityKernel path_kernel(int n) {
  std::vector<demd::Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 1.0);
    if (i + 1 < n) {
      t.emplace_back(i, i + 1, 1.0);
      t.emplace_back(i + 1, i, 1.0);
    }
  }
  demd::AffinityKernel k;
  k.weights.resize(n, n);
  k.weights.setFromTriplets(t.begin(), t.end());
  k.kind = demd::KernelKind::knn;
  return k;
}

inline demd::AffinityKernel from_dense(const demd::Matrix& w) {
  demd::AffinityKernel k;
  k.weights = w.sparseView();
  return k;
}

}  // namespace testing_support
