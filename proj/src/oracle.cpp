#include "demd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/QR>

#include "demd/error.hpp"

namespace demd {

namespace {

// Largest-remainder rounding of nonnegative weights to integers summing to total.
std::vector<std::int64_t> scale_masses(const Vector& w, std::int64_t total) {
  const double sum = w.sum();
  std::vector<std::int64_t> out(static_cast<std::size_t>(w.size()));
  std::vector<std::pair<double, int>> remainders;
  std::int64_t assigned = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double exact = w(i) / sum * static_cast<double>(total);
    const double fl = std::floor(exact);
    out[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(fl);
    assigned += out[static_cast<std::size_t>(i)];
    remainders.emplace_back(-(exact - fl), static_cast<int>(i));
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::int64_t r = 0; r < total - assigned; ++r)
    ++out[static_cast<std::size_t>(remainders[static_cast<std::size_t>(r % static_cast<std::int64_t>(remainders.size()))].second)];
  return out;
}

// Network simplex for an uncapacitated transportation problem. Node ids:
// suppliers [0, p), consumers [p, p+q), artificial root p+q.
class TransportSimplex {
 public:
  TransportSimplex(const std::vector<std::int64_t>& supply, const std::vector<std::int64_t>& demand, const Matrix& cost)
      : p_(static_cast<int>(supply.size())), q_(static_cast<int>(demand.size())), root_(p_ + q_) {
    const int nodes = p_ + q_ + 1;
    const int real = p_ * q_;
    const double max_cost = cost.size() > 0 ? cost.maxCoeff() : 0.0;
    const double big = (std::max(max_cost, 0.0) + 1.0) * static_cast<double>(nodes);
    eps_ = 1e-12 * (max_cost + 1.0) * static_cast<double>(nodes);
    source_.reserve(static_cast<std::size_t>(real + nodes));
    for (int i = 0; i < p_; ++i)
      for (int j = 0; j < q_; ++j) add_arc(i, p_ + j, cost(i, j));
    adjacency_.assign(static_cast<std::size_t>(nodes), {});
    for (int i = 0; i < p_; ++i) {
      const int a = add_arc(i, root_, big);
      flow_[static_cast<std::size_t>(a)] = supply[static_cast<std::size_t>(i)];
      link(a);
    }
    for (int j = 0; j < q_; ++j) {
      const int a = add_arc(root_, p_ + j, big);
      flow_[static_cast<std::size_t>(a)] = demand[static_cast<std::size_t>(j)];
      link(a);
    }
    real_arcs_ = real;
    parent_.assign(static_cast<std::size_t>(nodes), -1);
    pred_.assign(static_cast<std::size_t>(nodes), -1);
    up_.assign(static_cast<std::size_t>(nodes), 0);
    depth_.assign(static_cast<std::size_t>(nodes), 0);
    pi_.assign(static_cast<std::size_t>(nodes), 0.0);
    rebuild();
  }

  void solve() {
    const int block = std::max(10, static_cast<int>(std::sqrt(static_cast<double>(real_arcs_))));
    int next = 0;
    while (true) {
      const int in = find_entering(block, next);
      if (in < 0) break;
      pivot(in);
    }
    for (std::size_t a = static_cast<std::size_t>(real_arcs_); a < flow_.size(); ++a)
      if (flow_[a] != 0) throw NumericalFailure("transport solve ended with flow on an artificial arc");
  }

  double objective() const {
    long double total = 0.0L;
    for (int a = 0; a < real_arcs_; ++a)
      if (flow_[static_cast<std::size_t>(a)] != 0)
        total += static_cast<long double>(flow_[static_cast<std::size_t>(a)]) * cost_[static_cast<std::size_t>(a)];
    return static_cast<double>(total);
  }

 private:
  int add_arc(int s, int t, double c) {
    source_.push_back(s);
    target_.push_back(t);
    cost_.push_back(c);
    flow_.push_back(0);
    in_tree_.push_back(0);
    return static_cast<int>(source_.size()) - 1;
  }

  void link(int a) {
    in_tree_[static_cast<std::size_t>(a)] = 1;
    adjacency_[static_cast<std::size_t>(source_[static_cast<std::size_t>(a)])].push_back(a);
    adjacency_[static_cast<std::size_t>(target_[static_cast<std::size_t>(a)])].push_back(a);
  }

  void unlink(int a) {
    in_tree_[static_cast<std::size_t>(a)] = 0;
    for (int end : {source_[static_cast<std::size_t>(a)], target_[static_cast<std::size_t>(a)]}) {
      auto& adj = adjacency_[static_cast<std::size_t>(end)];
      adj.erase(std::find(adj.begin(), adj.end(), a));
    }
  }

  // Parent pointers, depths and potentials from the root over tree arcs;
  // tree arcs satisfy cost + pi[source] - pi[target] = 0.
  void rebuild() {
    std::deque<int> queue{root_};
    std::fill(parent_.begin(), parent_.end(), -2);
    parent_[static_cast<std::size_t>(root_)] = -1;
    depth_[static_cast<std::size_t>(root_)] = 0;
    pi_[static_cast<std::size_t>(root_)] = 0.0;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int a : adjacency_[static_cast<std::size_t>(u)]) {
        const int s = source_[static_cast<std::size_t>(a)], t = target_[static_cast<std::size_t>(a)];
        const int v = s == u ? t : s;
        if (parent_[static_cast<std::size_t>(v)] != -2) continue;
        parent_[static_cast<std::size_t>(v)] = u;
        pred_[static_cast<std::size_t>(v)] = a;
        up_[static_cast<std::size_t>(v)] = s == v;  // arc points from v towards the root
        depth_[static_cast<std::size_t>(v)] = depth_[static_cast<std::size_t>(u)] + 1;
        pi_[static_cast<std::size_t>(v)] = up_[static_cast<std::size_t>(v)]
                                               ? pi_[static_cast<std::size_t>(u)] - cost_[static_cast<std::size_t>(a)]
                                               : pi_[static_cast<std::size_t>(u)] + cost_[static_cast<std::size_t>(a)];
        queue.push_back(v);
      }
    }
  }

  double reduced(int a) const {
    return cost_[static_cast<std::size_t>(a)] + pi_[static_cast<std::size_t>(source_[static_cast<std::size_t>(a)])] -
           pi_[static_cast<std::size_t>(target_[static_cast<std::size_t>(a)])];
  }

  // Block search: most negative reduced cost within the first block that has one.
  int find_entering(int block, int& next) {
    int best = -1;
    double best_rc = -eps_;
    int scanned_in_block = 0;
    for (int count = 0; count < real_arcs_; ++count) {
      const int a = next;
      next = next + 1 == real_arcs_ ? 0 : next + 1;
      if (!in_tree_[static_cast<std::size_t>(a)]) {
        const double rc = reduced(a);
        if (rc < best_rc) {
          best_rc = rc;
          best = a;
        }
      }
      if (++scanned_in_block == block) {
        if (best >= 0) return best;
        scanned_in_block = 0;
      }
    }
    return best;
  }

  void pivot(int in) {
    const int first = source_[static_cast<std::size_t>(in)];
    const int second = target_[static_cast<std::size_t>(in)];
    int u = first, v = second;
    while (u != v) {
      if (depth_[static_cast<std::size_t>(u)] >= depth_[static_cast<std::size_t>(v)]) {
        u = parent_[static_cast<std::size_t>(u)];
      } else {
        v = parent_[static_cast<std::size_t>(v)];
      }
    }
    const int join = u;

    // Flow runs first -> second on the entering arc, then second up to join
    // and join down to first. The last blocking arc in that order leaves,
    // which keeps the tree strongly feasible.
    constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();
    std::int64_t delta = kInf;
    int leave_node = -1;
    for (int w = first; w != join; w = parent_[static_cast<std::size_t>(w)]) {
      const std::int64_t d = up_[static_cast<std::size_t>(w)] ? flow_[static_cast<std::size_t>(pred_[static_cast<std::size_t>(w)])] : kInf;
      if (d < delta) {
        delta = d;
        leave_node = w;
      }
    }
    for (int w = second; w != join; w = parent_[static_cast<std::size_t>(w)]) {
      const std::int64_t d = up_[static_cast<std::size_t>(w)] ? kInf : flow_[static_cast<std::size_t>(pred_[static_cast<std::size_t>(w)])];
      if (d <= delta) {
        delta = d;
        leave_node = w;
      }
    }
    if (leave_node < 0) throw NumericalFailure("transport problem is unbounded");

    flow_[static_cast<std::size_t>(in)] += delta;
    for (int w = first; w != join; w = parent_[static_cast<std::size_t>(w)])
      flow_[static_cast<std::size_t>(pred_[static_cast<std::size_t>(w)])] += up_[static_cast<std::size_t>(w)] ? -delta : delta;
    for (int w = second; w != join; w = parent_[static_cast<std::size_t>(w)])
      flow_[static_cast<std::size_t>(pred_[static_cast<std::size_t>(w)])] += up_[static_cast<std::size_t>(w)] ? delta : -delta;

    unlink(pred_[static_cast<std::size_t>(leave_node)]);
    link(in);
    rebuild();
  }

  int p_, q_, root_;
  int real_arcs_ = 0;
  double eps_ = 0.0;
  std::vector<int> source_, target_;
  std::vector<double> cost_;
  std::vector<std::int64_t> flow_;
  std::vector<char> in_tree_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<int> parent_, pred_, depth_;
  std::vector<char> up_;
  std::vector<double> pi_;
};

void check_distribution(const Vector& w, const char* name) {
  if (w.size() < 1) throw InvalidInput(std::string(name) + " is empty");
  if (!w.allFinite() || w.minCoeff() < 0.0) throw InvalidInput(std::string(name) + " must be finite and nonnegative");
}

}  // namespace

CostMatrix CostMatrix::absolute_difference(const Vector& x, const Vector& y) {
  CostMatrix c;
  c.costs.resize(x.size(), y.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    for (Eigen::Index j = 0; j < y.size(); ++j) c.costs(i, j) = std::abs(x(i) - y(j));
  c.description = "absolute difference";
  return c;
}

CostMatrix CostMatrix::euclidean(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvalidInput("point sets have different dimensions");
  CostMatrix c;
  c.costs.resize(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) c.costs(i, j) = (a.row(i) - b.row(j)).norm();
  c.description = "euclidean";
  return c;
}

double exact_emd(const Vector& mu, const Vector& nu, const CostMatrix& costs) {
  check_distribution(mu, "mu");
  check_distribution(nu, "nu");
  if (costs.costs.rows() != mu.size() || costs.costs.cols() != nu.size())
    throw InvalidInput("cost matrix shape does not match the distributions");
  if (!costs.costs.allFinite()) throw InvalidInput("costs must be finite");
  if (std::abs(mu.sum() - 1.0) > 1e-9 || std::abs(nu.sum() - 1.0) > 1e-9)
    throw InvalidInput("distributions must each have unit mass (within 1e-9)");

  const auto a = scale_masses(mu, kMassScale);
  const auto b = scale_masses(nu, kMassScale);
  IndexList rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] > 0) rows.push_back(static_cast<int>(i));
  for (std::size_t j = 0; j < b.size(); ++j)
    if (b[j] > 0) cols.push_back(static_cast<int>(j));
  std::vector<std::int64_t> supply, demand;
  for (int i : rows) supply.push_back(a[static_cast<std::size_t>(i)]);
  for (int j : cols) demand.push_back(b[static_cast<std::size_t>(j)]);
  Matrix sub(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = costs.costs(rows[i], cols[j]);

  TransportSimplex solver(supply, demand, sub);
  solver.solve();
  return solver.objective() / static_cast<double>(kMassScale);
}

double exact_emd_1d(const Vector& positions, const Vector& mu, const Vector& nu) {
  if (positions.size() != mu.size() || positions.size() != nu.size())
    throw InvalidInput("positions and distributions must have equal length");
  check_distribution(mu, "mu");
  check_distribution(nu, "nu");
  for (Eigen::Index i = 1; i < positions.size(); ++i)
    if (!(positions(i) >= positions(i - 1))) throw InvalidInput("positions must be sorted ascending");
  double cdf = 0.0, total = 0.0;
  for (Eigen::Index i = 0; i + 1 < positions.size(); ++i) {
    cdf += mu(i) - nu(i);
    total += std::abs(cdf) * (positions(i + 1) - positions(i));
  }
  return total;
}

double precision_at_k(const std::vector<IndexList>& predicted, const std::vector<IndexList>& truth, int k) {
  if (predicted.size() != truth.size()) throw InvalidInput("predicted and true neighbour lists differ in count");
  if (predicted.empty()) throw InvalidInput("no neighbour lists given");
  if (k < 1) throw InvalidParameter("k must be positive");
  double total = 0.0;
  for (std::size_t q = 0; q < predicted.size(); ++q) {
    if (static_cast<int>(predicted[q].size()) < k || static_cast<int>(truth[q].size()) < k)
      throw InvalidParameter("k=" + std::to_string(k) + " exceeds a neighbour list length");
    IndexList a(predicted[q].begin(), predicted[q].begin() + k);
    IndexList b(truth[q].begin(), truth[q].begin() + k);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    IndexList both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    total += static_cast<double>(both.size()) / k;
  }
  return total / static_cast<double>(predicted.size());
}

Vector average_ranks(const Vector& values) {
  const Eigen::Index n = values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
  Vector ranks(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && values(order[static_cast<std::size_t>(j + 1)]) == values(order[static_cast<std::size_t>(i)])) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index t = i; t <= j; ++t) ranks(order[static_cast<std::size_t>(t)]) = r;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw InvalidInput("rank correlation needs equal lengths");
  if (a.size() < 2) throw InvalidInput("rank correlation needs at least two values");
  const Vector ra = average_ranks(a).array() - 0.5 * static_cast<double>(a.size() + 1);
  const Vector rb = average_ranks(b).array() - 0.5 * static_cast<double>(b.size() + 1);
  const double na = ra.norm(), nb = rb.norm();
  if (na == 0.0 || nb == 0.0) throw InvalidInput("rank correlation is undefined for constant input");
  return std::clamp(ra.dot(rb) / (na * nb), -1.0, 1.0);
}

Vector upper_triangle(const Matrix& d) {
  const Eigen::Index m = d.rows();
  Vector out(m * (m - 1) / 2);
  Eigen::Index t = 0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) out(t++) = d(i, j);
  return out;
}

double swiss_roll_arclength(double t) { return 0.5 * (t * std::sqrt(1.0 + t * t) + std::asinh(t)); }

double swiss_roll_angle(double s) {
  double t = std::sqrt(2.0 * std::max(s, 0.0));
  for (int it = 0; it < 100; ++it) {
    const double step = (swiss_roll_arclength(t) - s) / std::sqrt(1.0 + t * t);
    t -= step;
    if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(t))) break;
  }
  return t;
}

SwissRoll generate_swiss_roll(int m, int points_per, double noise, std::uint64_t seed, bool rotate_10d) {
  if (m < 1 || points_per < 1) throw InvalidParameter("swiss roll needs m >= 1 and points_per >= 1");
  if (!(noise >= 0.0)) throw InvalidParameter("noise must be nonnegative");
  constexpr double kHeight = 21.0;
  const double s_lo = swiss_roll_arclength(1.5 * std::numbers::pi);
  const double s_hi = swiss_roll_arclength(4.5 * std::numbers::pi);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> along(s_lo, s_hi), across(0.0, kHeight);
  std::normal_distribution<double> normal;

  SwissRoll out;
  out.centers.resize(m, 2);
  for (int b = 0; b < m; ++b) {
    out.centers(b, 0) = along(rng);
    out.centers(b, 1) = across(rng);
  }
  const int n = m * points_per;
  out.unrolled.resize(n, 2);
  out.angle.resize(n);
  Matrix ambient(n, 3);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int b = 0; b < m; ++b) {
    for (int i = 0; i < points_per; ++i) {
      const int row = b * points_per + i;
      const double s = out.centers(b, 0) + noise * normal(rng);
      const double h = out.centers(b, 1) + noise * normal(rng);
      const double t = swiss_roll_angle(s);
      out.unrolled(row, 0) = s;
      out.unrolled(row, 1) = h;
      out.angle(row) = t;
      ambient(row, 0) = t * std::cos(t);
      ambient(row, 1) = h;
      ambient(row, 2) = t * std::sin(t);
      labels[static_cast<std::size_t>(row)] = b;
    }
  }
  if (rotate_10d) {
    Matrix g(10, 10);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) g(i, j) = normal(rng);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Matrix padded = Matrix::Zero(n, 10);
    padded.leftCols(3) = ambient;
    ambient = padded * q.transpose();
  }
  out.points = PointCloud::create(std::move(ambient), std::move(labels), m);
  return out;
}

PointCloud generate_line_graph(int n) {
  if (n < 2) throw InvalidParameter("line graph needs at least two points");
  Matrix x(n, 1);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    x(i, 0) = static_cast<double>(i) / (n - 1);
    labels[static_cast<std::size_t>(i)] = i;
  }
  return PointCloud::create(std::move(x), std::move(labels), n);
}

}  // namespace demd
