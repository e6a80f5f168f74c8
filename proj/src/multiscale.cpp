#include "demd/multiscale.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <functional>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "demd/error.hpp"
#include "demd/parallel.hpp"

namespace demd {

namespace {

int ceil_log2(int n) {
  int c = 0;
  while ((1LL << c) < static_cast<long long>(n)) ++c;
  return c;
}

void check_distributions(const DiffusionOperator& op, const DistributionSet& dist) {
  if (dist.num_nodes() != op.size())
    throw InvalidInput("distribution rows (" + std::to_string(dist.num_nodes()) + ") do not match graph size (" +
                       std::to_string(op.size()) + ")");
  if (dist.num_distributions() < 1) throw InvalidInput("at least one distribution is required");
}

IndexList all_nodes(int n) {
  IndexList ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  return ids;
}

}  // namespace

DistributionSet DistributionSet::from_measures(Matrix measures) {
  if (measures.rows() < 1 || measures.cols() < 1) throw InvalidInput("distribution matrix is empty");
  if (!measures.allFinite() || measures.minCoeff() < 0.0) throw InvalidInput("distributions must be finite and nonnegative");
  for (Eigen::Index j = 0; j < measures.cols(); ++j) {
    const double mass = measures.col(j).sum();
    if (std::abs(mass - 1.0) > 1e-12)
      throw InvalidInput("distribution " + std::to_string(j) + " has mass " + std::to_string(mass) + ", expected 1");
  }
  DistributionSet out;
  out.counts.assign(static_cast<std::size_t>(measures.cols()), 1);
  out.measures = std::move(measures);
  return out;
}

DistributionSet indicator_distributions(const std::vector<int>& labels, int m) {
  if (m < 1) throw InvalidParameter("number of distributions must be positive");
  if (labels.empty()) throw InvalidInput("labels are empty");
  DistributionSet out;
  out.counts.assign(static_cast<std::size_t>(m), 0);
  for (int l : labels) {
    if (l < 0 || l >= m) throw InvalidInput("label " + std::to_string(l) + " outside [0, " + std::to_string(m) + ")");
    ++out.counts[static_cast<std::size_t>(l)];
  }
  for (int i = 0; i < m; ++i)
    if (out.counts[static_cast<std::size_t>(i)] == 0) throw InvalidInput("distribution " + std::to_string(i) + " is empty");
  out.measures = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), m);
  for (std::size_t v = 0; v < labels.size(); ++v)
    out.measures(static_cast<Eigen::Index>(v), labels[v]) = 1.0 / out.counts[static_cast<std::size_t>(labels[v])];
  return out;
}

std::size_t ScaleStack::total_centers() const {
  std::size_t total = 0;
  for (const auto& level : levels) total += level.centers.size();
  return total;
}

std::string to_string(EmbedMethod method) {
  switch (method) {
    case EmbedMethod::exact_spectral: return "exact";
    case EmbedMethod::chebyshev: return "chebyshev";
    case EmbedMethod::interpolative: return "id";
  }
  return "unknown";
}

EmbedMethod parse_embed_method(const std::string& name) {
  if (name == "exact" || name == "exact_spectral") return EmbedMethod::exact_spectral;
  if (name == "chebyshev" || name == "cheb") return EmbedMethod::chebyshev;
  if (name == "id" || name == "interpolative") return EmbedMethod::interpolative;
  throw InvalidParameter("unknown embedding method '" + name + "'");
}

void EmbedConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 0.5)) throw InvalidParameter("alpha must lie in (0, 0.5]");
  if (max_scale < 0) throw InvalidParameter("max scale must be positive (0 selects the default)");
  if (max_scale > 40) throw InvalidParameter("max scale above 40 overflows the dyadic power");
  if (cheb_order < 1) throw InvalidParameter("Chebyshev order must be at least 1");
  if (n_scales_kept < 1) throw InvalidParameter("number of kept scales must be positive");
  if (!(rank_delta > 0.0)) throw InvalidParameter("rank threshold delta must be positive");
}

int default_max_scale_for_size(int n) { return std::max(ceil_log2(std::max(n, 1)), 8); }

int EmbedConfig::resolved_max_scale(int n) const { return max_scale > 0 ? max_scale : default_max_scale_for_size(n); }

ScaleStack diffuse_dyadic_exact(const DiffusionOperator& op, const SpectralCache& spectrum,
                                const DistributionSet& dist, int max_scale, double truncation_tol) {
  if (max_scale < 1) throw InvalidParameter("max scale K must be at least 1");
  check_distributions(op, dist);
  const int n = op.size();
  if (spectrum.eigenvectors.rows() != n) throw InvalidState("spectral cache was computed for a different graph");
  if (!spectrum.complete) {
    const double last = std::abs(spectrum.eigenvalues(spectrum.rank() - 1));
    if (last * last > truncation_tol) {
      std::ostringstream msg;
      msg << "spectral cache truncated at rank " << spectrum.rank() << " with |lambda_r|^2 = " << last * last
          << "; exact diffusion needs a complete cache";
      throw InvalidState(msg.str());
    }
  }

  ScaleStack stack;
  stack.levels.reserve(static_cast<std::size_t>(max_scale) + 1);
  const RowMatrix mu = dist.measures;
  stack.levels.push_back({0, all_nodes(n), Matrix(op.apply(mu)), Vector()});

  const Matrix& u = spectrum.eigenvectors;
  const Matrix projected = u.transpose() * (op.sqrt_deg().asDiagonal() * dist.measures);  // r x m
  Vector powers = spectrum.eigenvalues;
  for (int k = 1; k <= max_scale; ++k) {
    powers = powers.cwiseProduct(powers);  // lambda^(2^k)
    Matrix filtered = powers.asDiagonal() * projected;
    Matrix values = op.inv_sqrt_deg().asDiagonal() * (u * filtered);
    stack.levels.push_back({k, all_nodes(n), std::move(values), Vector()});
  }
  return stack;
}

Vector chebyshev_coefficients(long long power, int order) {
  if (order < 1) throw InvalidParameter("Chebyshev order must be at least 1");
  if (power < 0) throw InvalidParameter("power must be nonnegative");
  const int nodes = order + 1;
  Vector samples(nodes), theta(nodes);
  for (int i = 0; i < nodes; ++i) {
    theta(i) = std::numbers::pi * (i + 0.5) / nodes;
    samples(i) = std::pow(std::cos(theta(i)), static_cast<double>(power));
  }
  Vector c(nodes);
  for (int j = 0; j < nodes; ++j) {
    double s = 0.0;
    for (int i = 0; i < nodes; ++i) s += samples(i) * std::cos(j * theta(i));
    c(j) = 2.0 * s / nodes;
  }
  c(0) *= 0.5;
  return c;
}

ScaleStack diffuse_dyadic_chebyshev(const DiffusionOperator& op, const DistributionSet& dist, int max_scale,
                                    int order) {
  if (max_scale < 1) throw InvalidParameter("max scale K must be at least 1");
  if (order < 1) throw InvalidParameter("Chebyshev order J must be at least 1");
  check_distributions(op, dist);
  const int n = op.size();
  const int m = dist.num_distributions();

  std::vector<Vector> coeffs;
  for (int k = 0; k <= max_scale; ++k) coeffs.push_back(chebyshev_coefficients(1LL << k, order));

  // Three-term recurrence T_{j+1} = 2 S T_j - T_{j-1} on D^1/2 mu; every
  // scale's filter accumulates from the same sweep. Terms are buffered and
  // folded into the accumulators node by node, one pass per chunk. Nodes are
  // relabelled by a bandwidth-reducing order for the sweep.
  const IndexList order_map = bandwidth_order(op.sym());
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm(n);
  for (int i = 0; i < n; ++i) perm.indices()(order_map[static_cast<std::size_t>(i)]) = i;
  const SparseMatrix s = perm * op.sym() * perm.transpose();
  const int levels = max_scale + 1;
  const int passes = (order + 24) / 24;
  const int width = (order + passes) / passes;
  // Row i of acc holds node i's levels x m block; row i of chunk holds the
  // buffered terms for node i.
  RowMatrix acc = RowMatrix::Zero(n, static_cast<Eigen::Index>(levels) * m);
  RowMatrix chunk(n, static_cast<Eigen::Index>(width) * m);
  Matrix weights(levels, width);
  int first = 0, filled = 0;
  const auto flush = [&] {
    for (int k = 0; k < levels; ++k)
      for (int t = 0; t < filled; ++t) weights(k, t) = coeffs[static_cast<std::size_t>(k)](first + t);
    const auto w = weights.leftCols(filled);
    parallel_for(n, [&](std::ptrdiff_t i) {
      Eigen::Map<RowMatrix> a(acc.row(i).data(), levels, m);
      const Eigen::Map<const RowMatrix> terms(chunk.row(i).data(), filled, m);
      a.noalias() += w * terms;
    });
    first += filled;
    filled = 0;
  };
  const auto push = [&](const RowMatrix& term) {
    chunk.middleCols(static_cast<Eigen::Index>(filled++) * m, m) = term;
    if (filled == width) flush();
  };

  RowMatrix prev = perm * (op.sqrt_deg().asDiagonal() * dist.measures);
  RowMatrix curr;
  sparse_times(s, prev, curr);
  push(prev);
  push(curr);
  RowMatrix next(n, m);
  for (int j = 2; j <= order; ++j) {
    sparse_times(s, curr, next);
    next = 2.0 * next - prev;
    push(next);
    std::swap(prev, curr);
    std::swap(curr, next);
  }
  if (filled > 0) flush();

  ScaleStack stack;
  stack.levels.reserve(static_cast<std::size_t>(max_scale) + 1);
  for (int k = 0; k <= max_scale; ++k) {
    Matrix values(n, m);
    for (int i = 0; i < n; ++i) {
      const int node = order_map[static_cast<std::size_t>(i)];
      values.row(node) = op.inv_sqrt_deg()(node) * acc.block(i, static_cast<Eigen::Index>(k) * m, 1, m);
    }
    stack.levels.push_back({k, all_nodes(n), std::move(values), Vector()});
  }
  return stack;
}

MultiscaleEmbedding assemble_embedding(const ScaleStack& stack, double alpha, int max_scale) {
  if (stack.levels.empty()) throw InvalidState("scale stack is empty");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidParameter("alpha must be positive");
  if (stack.max_scale() != max_scale)
    throw InvalidState("stack ends at scale " + std::to_string(stack.max_scale()) + ", expected K = " + std::to_string(max_scale));
  const int m = stack.num_distributions();
  for (std::size_t l = 0; l < stack.levels.size(); ++l) {
    const auto& level = stack.levels[l];
    if (level.scale != stack.first_scale() + static_cast<int>(l)) throw InvalidState("stack scales are not consecutive");
    if (level.values.cols() != m || level.values.rows() != static_cast<Eigen::Index>(level.centers.size()))
      throw InvalidState("level " + std::to_string(level.scale) + " has inconsistent dimensions");
    if (level.weights.size() != 0 && level.weights.size() != static_cast<Eigen::Index>(level.centers.size()))
      throw InvalidState("level " + std::to_string(level.scale) + " has one weight per center or none");
  }

  MultiscaleEmbedding emb;
  std::size_t total = 0;
  for (std::size_t l = 1; l < stack.levels.size(); ++l) total += stack.levels[l].centers.size();
  total += stack.levels.back().centers.size();
  emb.bins.resize(m, static_cast<Eigen::Index>(total));

  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < stack.levels.size(); ++l) {
    const auto& fine = stack.levels[l];
    const auto& coarse = stack.levels[l + 1];
    const int k = fine.scale;
    // Restriction of the finer level onto the coarser centers.
    IndexList rows;
    rows.reserve(coarse.centers.size());
    for (int c : coarse.centers) {
      const auto it = std::lower_bound(fine.centers.begin(), fine.centers.end(), c);
      if (it == fine.centers.end() || *it != c)
        throw InvalidState("centers of scale " + std::to_string(k + 1) + " are not a subset of scale " + std::to_string(k));
      rows.push_back(static_cast<int>(it - fine.centers.begin()));
    }
    const double weight = std::pow(2.0, -static_cast<double>(max_scale - k - 1) * alpha);
    for (std::size_t c = 0; c < rows.size(); ++c)
      emb.bins.col(static_cast<Eigen::Index>(offset + c)) =
          weight * coarse.weight(c) * (coarse.values.row(static_cast<Eigen::Index>(c)) - fine.values.row(rows[c])).transpose();
    emb.blocks.push_back({k, offset, rows.size(), weight, coarse.centers});
    offset += rows.size();
  }
  const auto& last = stack.levels.back();
  for (std::size_t c = 0; c < last.centers.size(); ++c)
    emb.bins.col(static_cast<Eigen::Index>(offset + c)) = last.weight(c) * last.values.row(static_cast<Eigen::Index>(c)).transpose();
  emb.blocks.push_back({max_scale, offset, last.centers.size(), 1.0, last.centers});
  emb.config.alpha = alpha;
  emb.config.max_scale = max_scale;
  return emb;
}

int max_scale_from_gap(double lambda1, double min_sqrt_pi, double mix_tol, int n) {
  if (!(mix_tol > 0.0 && mix_tol < 1.0)) throw InvalidParameter("mix_tol must lie in (0, 1)");
  if (!(min_sqrt_pi > 0.0)) throw InvalidParameter("stationary mass must be positive");
  const int lower = 8;
  const int upper = ceil_log2(std::max(n, 1)) + 4;
  const double threshold = mix_tol * min_sqrt_pi;
  double value = std::min(std::abs(lambda1), 1.0);
  int k = 0;
  while (value > threshold && k < upper) {
    value *= value;
    ++k;
  }
  return std::max(lower, std::min(k, upper));
}

int default_max_scale(const DiffusionOperator& op, double mix_tol) {
  const auto& conn = op.connectivity();
  const Vector pi = stationary_distribution_per_component(op);
  std::vector<IndexList> members(static_cast<std::size_t>(conn.num_components));
  for (int i = 0; i < op.size(); ++i) members[static_cast<std::size_t>(conn.component[static_cast<std::size_t>(i)])].push_back(i);

  int best = 0;
  for (const auto& nodes : members) {
    const int size = static_cast<int>(nodes.size());
    double min_pi = 1.0;
    for (int v : nodes) min_pi = std::min(min_pi, pi(v));
    double lambda1 = 0.0;
    if (size > 1) {
      std::vector<int> local(static_cast<std::size_t>(op.size()), -1);
      for (int t = 0; t < size; ++t) local[static_cast<std::size_t>(nodes[static_cast<std::size_t>(t)])] = t;
      std::vector<Triplet> trip;
      for (int v : nodes)
        for (SparseMatrix::InnerIterator it(op.sym(), v); it; ++it)
          trip.emplace_back(local[static_cast<std::size_t>(v)], local[static_cast<std::size_t>(it.col())], it.value());
      SparseMatrix sub(size, size);
      sub.setFromTriplets(trip.begin(), trip.end());
      SpectralOptions opts;
      if (size <= opts.dense_cutoff) {
        Eigen::SelfAdjointEigenSolver<Matrix> solver(Matrix(sub), Eigen::EigenvaluesOnly);
        Vector mags = solver.eigenvalues().cwiseAbs();
        std::sort(mags.data(), mags.data() + mags.size(), std::greater<>());
        lambda1 = mags(1);
      } else {
        opts.max_krylov = std::min(size, 1000);
        lambda1 = std::abs(lanczos_top_eigenpairs(sub, 2, 1e-6, opts).eigenvalues(1));
      }
    }
    best = std::max(best, max_scale_from_gap(lambda1, std::sqrt(min_pi), mix_tol, op.size()));
  }
  return best;
}

MultiscaleEmbedding embed_distributions(const DiffusionOperator& op, const DistributionSet& dist,
                                        const EmbedConfig& config, const SpectralCache* spectrum) {
  config.validate();
  const int k = config.resolved_max_scale(op.size());
  ScaleStack stack;
  switch (config.method) {
    case EmbedMethod::exact_spectral: {
      if (spectrum) {
        stack = diffuse_dyadic_exact(op, *spectrum, dist, k);
      } else {
        stack = diffuse_dyadic_exact(op, spectral_decompose(op), dist, k);
      }
      break;
    }
    case EmbedMethod::chebyshev:
      stack = diffuse_dyadic_chebyshev(op, dist, k, config.cheb_order);
      break;
    case EmbedMethod::interpolative:
      throw InvalidParameter("the interpolative engine needs the kernel; use id_diffusion_embedding");
  }
  MultiscaleEmbedding emb = assemble_embedding(stack, config.alpha, k);
  emb.config = config;
  emb.config.max_scale = k;
  return emb;
}

}  // namespace demd
