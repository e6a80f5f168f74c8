#include "demd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/cuthill_mckee_ordering.hpp>

#include "demd/error.hpp"
#include "demd/parallel.hpp"

namespace demd {

namespace {

double squared_distance(const Matrix& coords, int i, int j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < coords.cols(); ++c) {
    const double diff = coords(i, c) - coords(j, c);
    s += diff * diff;
  }
  return s;
}

void check_finite(const Matrix& coords) {
  if (!coords.allFinite()) throw InvalidInput("point coordinates must be finite");
}

// Builds a symmetric sparse matrix from per-row (col, value) lists that
// already contain both (i,j) and (j,i) with identical values, plus the unit
// diagonal.
SparseMatrix assemble_symmetric(int n, const std::vector<std::vector<std::pair<int, double>>>& rows) {
  std::vector<Triplet> triplets;
  std::size_t total = static_cast<std::size_t>(n);
  for (const auto& r : rows) total += r.size();
  triplets.reserve(total);
  for (int i = 0; i < n; ++i) {
    triplets.emplace_back(i, i, 1.0);
    for (const auto& [j, w] : rows[static_cast<std::size_t>(i)]) triplets.emplace_back(i, j, w);
  }
  SparseMatrix out(n, n);
  out.setFromTriplets(triplets.begin(), triplets.end());
  out.makeCompressed();
  return out;
}

// Adaptive scales: distance to the ceil(percentile*k)-th neighbour. Zero
// scales (coincident neighbours) fall back to the mean positive scale.
Vector adaptive_scales(const std::vector<std::vector<std::pair<int, double>>>& neighbors, int k,
                       double percentile) {
  const int n = static_cast<int>(neighbors.size());
  const int rank = std::clamp(static_cast<int>(std::ceil(percentile * k)), 1, k);
  Vector scales(n);
  double positive_sum = 0.0;
  int positive = 0;
  for (int i = 0; i < n; ++i) {
    scales(i) = std::sqrt(neighbors[static_cast<std::size_t>(i)][static_cast<std::size_t>(rank - 1)].second);
    if (scales(i) > 0.0) {
      positive_sum += scales(i);
      ++positive;
    }
  }
  const double fallback = positive > 0 ? positive_sum / positive : 1.0;
  for (int i = 0; i < n; ++i)
    if (!(scales(i) > 0.0)) scales(i) = fallback;
  return scales;
}

template <typename DistanceFn>
AffinityKernel knn_kernel(int n, int k, const BandwidthRule& rule,
                          const std::vector<std::vector<std::pair<int, double>>>& neighbors,
                          DistanceFn&& sqdist) {
  AffinityKernel kernel;
  kernel.kind = KernelKind::knn;
  if (rule.kind == BandwidthRule::Kind::fixed) {
    if (!(rule.value > 0.0)) throw InvalidParameter("epsilon must be positive");
    kernel.epsilon = rule.value;
  } else {
    if (!(rule.value > 0.0 && rule.value <= 1.0))
      throw InvalidParameter("adaptive bandwidth percentile must lie in (0, 1]");
    kernel.scales = adaptive_scales(neighbors, k, rule.value);
  }

  // Union of neighbour relations, stored on both endpoints.
  std::vector<std::vector<int>> adjacency(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (const auto& [j, d2] : neighbors[static_cast<std::size_t>(i)]) {
      if (j == i) continue;
      adjacency[static_cast<std::size_t>(i)].push_back(j);
      adjacency[static_cast<std::size_t>(j)].push_back(i);
    }
  }
  std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(n));
  parallel_for(n, [&](std::ptrdiff_t ii) {
    const int i = static_cast<int>(ii);
    auto& adj = adjacency[static_cast<std::size_t>(i)];
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    auto& row = rows[static_cast<std::size_t>(i)];
    row.reserve(adj.size());
    for (int j : adj) {
      const double bw = kernel.scales.size() > 0 ? kernel.scales(i) * kernel.scales(j) : kernel.epsilon;
      const double w = std::exp(-sqdist(i, j) / bw);
      if (w > 0.0) row.emplace_back(j, w);
    }
  });
  kernel.weights = assemble_symmetric(n, rows);
  return kernel;
}

}  // namespace

PointCloud PointCloud::create(Matrix coords, std::vector<int> labels, std::optional<int> m) {
  if (coords.rows() < 1) throw InvalidInput("point cloud must contain at least one point");
  check_finite(coords);
  if (static_cast<Eigen::Index>(labels.size()) != coords.rows())
    throw InvalidInput("label count does not match point count");
  int count = m.value_or(0);
  if (!m) {
    for (int l : labels) count = std::max(count, l + 1);
  }
  std::vector<int> seen(static_cast<std::size_t>(std::max(count, 0)), 0);
  for (int l : labels) {
    if (l < 0 || l >= count) throw InvalidInput("label " + std::to_string(l) + " outside [0, " + std::to_string(count) + ")");
    ++seen[static_cast<std::size_t>(l)];
  }
  for (int i = 0; i < count; ++i)
    if (seen[static_cast<std::size_t>(i)] == 0) throw InvalidInput("distribution " + std::to_string(i) + " has no points");
  return PointCloud{std::move(coords), std::move(labels), count};
}

std::vector<std::vector<std::pair<int, double>>> nearest_neighbors(const Matrix& coords, int k) {
  const int n = static_cast<int>(coords.rows());
  if (k < 1 || k >= n) throw InvalidParameter("k must satisfy 1 <= k < n");
  std::vector<std::vector<std::pair<int, double>>> out(static_cast<std::size_t>(n));
  // Row-major copy keeps each point contiguous for the distance loop.
  const RowMatrix pts = coords;
  const Eigen::Index d = pts.cols();
  parallel_for(n, [&](std::ptrdiff_t ii) {
    const int i = static_cast<int>(ii);
    std::vector<std::pair<double, int>> cand;
    cand.reserve(static_cast<std::size_t>(n - 1));
    const double* pi = pts.row(i).data();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* pj = pts.row(j).data();
      double s = 0.0;
      for (Eigen::Index c = 0; c < d; ++c) {
        const double diff = pi[c] - pj[c];
        s += diff * diff;
      }
      cand.emplace_back(s, j);
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    auto& row = out[static_cast<std::size_t>(i)];
    row.reserve(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) row.emplace_back(cand[static_cast<std::size_t>(t)].second, cand[static_cast<std::size_t>(t)].first);
  });
  return out;
}

AffinityKernel gaussian_affinity(const PointCloud& points, double epsilon, std::optional<double> truncation) {
  check_finite(points.coords);
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidParameter("epsilon must be positive");
  const double cut = truncation.value_or(0.0);
  if (cut < 0.0 || cut >= 1.0) throw InvalidParameter("truncation must lie in [0, 1)");
  const int n = points.size();
  std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(n));
  parallel_for(n, [&](std::ptrdiff_t ii) {
    const int i = static_cast<int>(ii);
    auto& row = rows[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double w = std::exp(-squared_distance(points.coords, i, j) / epsilon);
      if (w > 0.0 && w >= cut) row.emplace_back(j, w);
    }
  });
  AffinityKernel kernel;
  kernel.kind = truncation ? KernelKind::truncated_gaussian : KernelKind::dense_gaussian;
  kernel.epsilon = epsilon;
  kernel.weights = assemble_symmetric(n, rows);
  return kernel;
}

AffinityKernel knn_affinity(const PointCloud& points, int k, const BandwidthRule& rule) {
  check_finite(points.coords);
  const int n = points.size();
  if (k < 1 || k >= n) throw InvalidParameter("kNN requires 1 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  const auto neighbors = nearest_neighbors(points.coords, k);
  return knn_kernel(n, k, rule, neighbors,
                    [&](int i, int j) { return squared_distance(points.coords, i, j); });
}

AffinityKernel knn_affinity_from_distances(const Matrix& distances, int k, const BandwidthRule& rule) {
  const int n = static_cast<int>(distances.rows());
  if (distances.cols() != n) throw InvalidInput("distance matrix must be square");
  if (!distances.allFinite()) throw InvalidInput("distances must be finite");
  if (k < 1 || k >= n) throw InvalidParameter("kNN requires 1 <= k < n");
  std::vector<std::vector<std::pair<int, double>>> neighbors(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> cand;
    for (int j = 0; j < n; ++j)
      if (j != i) cand.emplace_back(distances(i, j) * distances(i, j), j);
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int t = 0; t < k; ++t)
      neighbors[static_cast<std::size_t>(i)].emplace_back(cand[static_cast<std::size_t>(t)].second,
                                                          cand[static_cast<std::size_t>(t)].first);
  }
  // Symmetrize the squared distance so (i,j) and (j,i) produce identical weights.
  return knn_kernel(n, k, rule, neighbors, [&](int i, int j) {
    const double d = 0.5 * (distances(i, j) + distances(j, i));
    return d * d;
  });
}

ConnectivityReport connected_components(const SparseMatrix& adjacency) {
  const int n = static_cast<int>(adjacency.rows());
  ConnectivityReport report;
  report.component.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> stack;
  for (int start = 0; start < n; ++start) {
    if (report.component[static_cast<std::size_t>(start)] >= 0) continue;
    const int id = report.num_components++;
    int size = 0;
    stack.push_back(start);
    report.component[static_cast<std::size_t>(start)] = id;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      ++size;
      for (SparseMatrix::InnerIterator it(adjacency, u); it; ++it) {
        const int v = static_cast<int>(it.col());
        if (it.value() != 0.0 && report.component[static_cast<std::size_t>(v)] < 0) {
          report.component[static_cast<std::size_t>(v)] = id;
          stack.push_back(v);
        }
      }
    }
    report.sizes.push_back(size);
  }
  return report;
}

void sparse_times(const SparseMatrix& a, const RowMatrix& x, RowMatrix& y) {
  y.resize(a.rows(), x.cols());
  parallel_for(a.rows(), [&](std::ptrdiff_t i) {
    auto row = y.row(i);
    row.setZero();
    for (SparseMatrix::InnerIterator it(a, static_cast<Eigen::Index>(i)); it; ++it) row.noalias() += it.value() * x.row(it.col());
  });
}

Vector sparse_times(const SparseMatrix& a, const Vector& x) {
  Vector y(a.rows());
  parallel_for(a.rows(), [&](std::ptrdiff_t i) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(a, static_cast<Eigen::Index>(i)); it; ++it) s += it.value() * x(it.col());
    y(i) = s;
  });
  return y;
}

IndexList bandwidth_order(const SparseMatrix& a) {
  using Graph = boost::adjacency_list<boost::vecS, boost::vecS, boost::undirectedS>;
  Graph g(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(a, i); it; ++it)
      if (it.col() > i) boost::add_edge(static_cast<std::size_t>(i), static_cast<std::size_t>(it.col()), g);
  std::vector<std::size_t> order(static_cast<std::size_t>(a.rows()));
  boost::cuthill_mckee_ordering(g, order.rbegin());
  return IndexList(order.begin(), order.end());
}

DiffusionOperator build_diffusion_operator(const AffinityKernel& kernel) {
  const SparseMatrix& k = kernel.weights;
  const int n = static_cast<int>(k.rows());
  if (n < 1 || k.cols() != n) throw InvalidInput("kernel must be a nonempty square matrix");

  DiffusionOperator op;
  op.q_ = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    for (SparseMatrix::InnerIterator it(k, i); it; ++it) {
      if (!(it.value() >= 0.0) || !std::isfinite(it.value())) throw InvalidInput("kernel entries must be finite and nonnegative");
      op.q_(i) += it.value();
    }
  }
  std::vector<int> degenerate;
  for (int i = 0; i < n; ++i)
    if (!(op.q_(i) > 0.0)) degenerate.push_back(i);
  if (!degenerate.empty()) {
    std::ostringstream msg;
    msg << "kernel has " << degenerate.size() << " zero row(s): ";
    for (std::size_t t = 0; t < degenerate.size() && t < 10; ++t) msg << (t ? ", " : "") << degenerate[t];
    if (degenerate.size() > 10) msg << ", ...";
    throw DegenerateNode(msg.str(), std::move(degenerate));
  }

  // Products q_i*q_j and d_i*d_j commute exactly, so symmetry is preserved bit for bit.
  op.kernel_norm_ = k;
  for (int i = 0; i < n; ++i)
    for (SparseMatrix::InnerIterator it(op.kernel_norm_, i); it; ++it)
      it.valueRef() = it.value() / (op.q_(i) * op.q_(it.col()));

  op.deg_ = Vector::Zero(n);
  for (int i = 0; i < n; ++i)
    for (SparseMatrix::InnerIterator it(op.kernel_norm_, i); it; ++it) op.deg_(i) += it.value();

  op.sqrt_deg_ = op.deg_.cwiseSqrt();
  op.inv_sqrt_deg_ = op.sqrt_deg_.cwiseInverse();
  op.sym_ = op.kernel_norm_;
  for (int i = 0; i < n; ++i)
    for (SparseMatrix::InnerIterator it(op.sym_, i); it; ++it)
      it.valueRef() = it.value() / std::sqrt(op.deg_(i) * op.deg_(it.col()));

  op.connectivity_ = connected_components(k);
  return op;
}

Vector DiffusionOperator::apply(const Vector& v) const {
  if (v.size() != size()) throw InvalidInput("vector length does not match operator size");
  return inv_sqrt_deg_.cwiseProduct(sparse_times(sym_, Vector(sqrt_deg_.cwiseProduct(v))));
}

RowMatrix DiffusionOperator::apply(const RowMatrix& x) const {
  if (x.rows() != size()) throw InvalidInput("block row count does not match operator size");
  RowMatrix scaled = sqrt_deg_.asDiagonal() * x;
  RowMatrix out;
  sparse_times(sym_, scaled, out);
  return inv_sqrt_deg_.asDiagonal() * out;
}

Matrix DiffusionOperator::transition_dense() const {
  Matrix p = Matrix(sym_);
  return inv_sqrt_deg_.asDiagonal() * p * sqrt_deg_.asDiagonal();
}

Vector stationary_distribution(const DiffusionOperator& op) { return op.deg() / op.deg().sum(); }

Vector stationary_distribution_per_component(const DiffusionOperator& op) {
  const auto& conn = op.connectivity();
  std::vector<double> totals(static_cast<std::size_t>(conn.num_components), 0.0);
  for (int i = 0; i < op.size(); ++i) totals[static_cast<std::size_t>(conn.component[static_cast<std::size_t>(i)])] += op.deg()(i);
  Vector pi(op.size());
  for (int i = 0; i < op.size(); ++i) pi(i) = op.deg()(i) / totals[static_cast<std::size_t>(conn.component[static_cast<std::size_t>(i)])];
  return pi;
}

}  // namespace demd
