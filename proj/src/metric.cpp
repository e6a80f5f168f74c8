#include "demd/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "demd/error.hpp"
#include "demd/parallel.hpp"

namespace demd {

namespace {

double row_l1(const RowMatrix& x, Eigen::Index a, Eigen::Index b) {
  const double* pa = x.row(a).data();
  const double* pb = x.row(b).data();
  double s = 0.0;
  for (Eigen::Index t = 0; t < x.cols(); ++t) s += std::abs(pa[t] - pb[t]);
  return s;
}

using Candidate = std::pair<double, int>;  // (distance, index), ordered lexicographically

IndexList brute_force(const RowMatrix& x, int query, int k) {
  std::vector<Candidate> cand;
  cand.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index j = 0; j < x.rows(); ++j)
    if (j != query) cand.emplace_back(row_l1(x, query, j), static_cast<int>(j));
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
  IndexList out(static_cast<std::size_t>(k));
  for (int t = 0; t < k; ++t) out[static_cast<std::size_t>(t)] = cand[static_cast<std::size_t>(t)].second;
  return out;
}

void check_k(int k, int m) {
  if (k < 1 || k >= m)
    throw InvalidParameter("k=" + std::to_string(k) + " must satisfy 1 <= k < m = " + std::to_string(m));
}

}  // namespace

double diffusion_emd(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  if (a.size() != b.size())
    throw InvalidInput("embedding rows have different lengths (" + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()) + ")");
  double s = 0.0;
  for (Eigen::Index t = 0; t < a.size(); ++t) s += std::abs(a(t) - b(t));
  return s;
}

Matrix pairwise_l1(const Matrix& rows) {
  const RowMatrix x = rows;
  const int m = static_cast<int>(x.rows());
  Matrix d = Matrix::Zero(m, m);
  parallel_for_dynamic(m, [&](std::ptrdiff_t i) {
    for (Eigen::Index j = i + 1; j < m; ++j) d(i, j) = row_l1(x, i, j);
  });
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) d(j, i) = d(i, j);
  return d;
}

DistanceMatrix pairwise_distances(const MultiscaleEmbedding& embedding) {
  if (embedding.bins.rows() < 2) throw InvalidInput("pairwise distances need at least two embeddings");
  DistanceMatrix out;
  out.values = pairwise_l1(embedding.bins);
  out.method = to_string(embedding.config.method);
  out.config = embedding.config;
  return out;
}

MetricTree::MetricTree(RowMatrix points) : points_(std::move(points)) {
  std::vector<int> ids(static_cast<std::size_t>(points_.rows()));
  std::iota(ids.begin(), ids.end(), 0);
  nodes_.reserve(ids.size());
  root_ = build(ids, 0, static_cast<int>(ids.size()));
}

double MetricTree::distance(int a, int b) const { return row_l1(points_, a, b); }

int MetricTree::build(std::vector<int>& ids, int begin, int end) {
  if (begin >= end) return -1;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({ids[static_cast<std::size_t>(begin)], 0.0, -1, -1});
  if (end - begin == 1) return id;
  const int vp = ids[static_cast<std::size_t>(begin)];
  std::vector<std::pair<double, int>> rest;
  rest.reserve(static_cast<std::size_t>(end - begin - 1));
  for (int t = begin + 1; t < end; ++t) rest.emplace_back(distance(vp, ids[static_cast<std::size_t>(t)]), ids[static_cast<std::size_t>(t)]);
  const std::size_t mid = rest.size() / 2;
  std::nth_element(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(mid), rest.end());
  const double radius = rest[mid].first;
  // Inside: d <= radius, outside: d > radius.
  auto split = std::partition(rest.begin(), rest.end(), [&](const auto& p) { return p.first <= radius; });
  const int inside_count = static_cast<int>(split - rest.begin());
  for (std::size_t t = 0; t < rest.size(); ++t) ids[static_cast<std::size_t>(begin + 1) + t] = rest[t].second;
  nodes_[static_cast<std::size_t>(id)].radius = radius;
  const int inside = build(ids, begin + 1, begin + 1 + inside_count);
  const int outside = build(ids, begin + 1 + inside_count, end);
  nodes_[static_cast<std::size_t>(id)].inside = inside;
  nodes_[static_cast<std::size_t>(id)].outside = outside;
  return id;
}

IndexList MetricTree::query(int query, int k) const {
  check_k(k, size());
  if (query < 0 || query >= size()) throw InvalidParameter("query index out of range");
  std::priority_queue<Candidate> best;  // max-heap of the current k best
  auto tau = [&] { return best.size() < static_cast<std::size_t>(k) ? std::numeric_limits<double>::infinity() : best.top().first; };
  auto offer = [&](double d, int idx) {
    const Candidate c{d, idx};
    if (best.size() < static_cast<std::size_t>(k)) {
      best.push(c);
    } else if (c < best.top()) {
      best.pop();
      best.push(c);
    }
  };
  // Pruning keeps a small relative slack so rounding in the triangle
  // inequality can never drop a tied candidate.
  auto beyond = [&](double lower) {
    const double t = tau();
    return lower > t + 1e-12 * std::max(t, 1e-300) + 1e-300;
  };
  std::vector<std::pair<int, double>> stack;  // (node, lower bound)
  stack.emplace_back(root_, 0.0);
  while (!stack.empty()) {
    const auto [id, lower] = stack.back();
    stack.pop_back();
    if (id < 0 || beyond(lower)) continue;
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const double d = distance(query, node.point);
    if (node.point != query) offer(d, node.point);
    const double in_lb = std::max(0.0, d - node.radius);
    const double out_lb = std::max(0.0, node.radius - d);
    if (d <= node.radius) {
      stack.emplace_back(node.outside, out_lb);
      stack.emplace_back(node.inside, in_lb);
    } else {
      stack.emplace_back(node.inside, in_lb);
      stack.emplace_back(node.outside, out_lb);
    }
  }
  IndexList out(best.size());
  for (std::size_t t = best.size(); t-- > 0;) {
    out[t] = best.top().second;
    best.pop();
  }
  return out;
}

IndexList knn_query(const MultiscaleEmbedding& embedding, int query, int k) {
  const int m = embedding.num_distributions();
  check_k(k, m);
  if (query < 0 || query >= m) throw InvalidParameter("query index out of range");
  const RowMatrix x = embedding.bins;
  if (m <= kBruteForceLimit) return brute_force(x, query, k);
  return MetricTree(x).query(query, k);
}

std::vector<IndexList> knn_all(const Matrix& rows, int k) {
  const int m = static_cast<int>(rows.rows());
  check_k(k, m);
  RowMatrix x = rows;
  std::vector<IndexList> out(static_cast<std::size_t>(m));
  if (m <= kBruteForceLimit) {
    parallel_for_dynamic(m, [&](std::ptrdiff_t i) { out[static_cast<std::size_t>(i)] = brute_force(x, static_cast<int>(i), k); });
  } else {
    const MetricTree tree(std::move(x));
    parallel_for_dynamic(m, [&](std::ptrdiff_t i) { out[static_cast<std::size_t>(i)] = tree.query(static_cast<int>(i), k); });
  }
  return out;
}

std::vector<IndexList> knn_from_distances(const Matrix& distances, int k) {
  const int m = static_cast<int>(distances.rows());
  if (distances.cols() != m) throw InvalidInput("distance matrix must be square");
  check_k(k, m);
  std::vector<IndexList> out(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    std::vector<Candidate> cand;
    for (int j = 0; j < m; ++j)
      if (j != i) cand.emplace_back(distances(i, j), j);
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int t = 0; t < k; ++t) out[static_cast<std::size_t>(i)].push_back(cand[static_cast<std::size_t>(t)].second);
  }
  return out;
}

AffinityKernel sample_kernel(const DistanceMatrix& distances, int k, const BandwidthRule& rule) {
  const Matrix& d = distances.values;
  if (d.rows() != d.cols()) throw InvalidInput("distance matrix must be square");
  if (d.size() > 0 && d.minCoeff() < 0.0) throw InvalidInput("distances must be nonnegative");
  return knn_affinity_from_distances(d, k, rule);
}

}  // namespace demd
