#include "demd/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/QR>

#include "demd/error.hpp"

namespace demd {

namespace {

struct IDCore {
  IDFactors factors;
  Matrix q1r11;  // Q_1 R_11, equal to the selected columns up to rounding
};

IDCore id_core(const Matrix& a, int k, bool want_q1r11) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  if (k < 1 || k >= std::min(m, n))
    throw InvalidParameter("ID rank k=" + std::to_string(k) + " must satisfy 1 <= k < min(m, n) = " +
                           std::to_string(std::min(m, n)));
  if (!a.allFinite()) throw InvalidInput("ID input has non-finite entries");

  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  const auto& perm = qr.colsPermutation().indices();
  const int numerical_rank = static_cast<int>(qr.rank());
  const int kk = std::min(k, std::max(numerical_rank, 1));

  IDCore out;
  IDFactors& f = out.factors;
  f.requested_rank = k;
  f.permutation.assign(perm.data(), perm.data() + n);
  f.selected.assign(f.permutation.begin(), f.permutation.begin() + kk);

  Matrix t = Matrix::Zero(kk, n - kk);
  if (numerical_rank > 0) {
    const auto r11 = qr.matrixQR().topLeftCorner(kk, kk).triangularView<Eigen::Upper>();
    t = r11.solve(qr.matrixQR().topRightCorner(kk, n - kk));
  }
  f.coefficients = Matrix::Zero(kk, n);
  for (int i = 0; i < kk; ++i) f.coefficients(i, f.permutation[static_cast<std::size_t>(i)]) = 1.0;
  for (int c = 0; c < n - kk; ++c) f.coefficients.col(f.permutation[static_cast<std::size_t>(kk + c)]) = t.col(c);

  f.columns.resize(m, kk);
  for (int i = 0; i < kk; ++i) f.columns.col(i) = a.col(f.selected[static_cast<std::size_t>(i)]);

  if (want_q1r11) {
    Matrix r = Matrix::Zero(m, kk);
    r.topRows(kk) = qr.matrixQR().topLeftCorner(kk, kk).triangularView<Eigen::Upper>();
    out.q1r11 = qr.householderQ() * r;
  }
  return out;
}

Matrix gaussian_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix g(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) g(i, j) = normal(rng);
  return g;
}

// Nearest column of w2 for each column of b2; the pivot column wins ties.
bool recover_indices(const Matrix& w2, const Matrix& b2, const IndexList& pivots) {
  const double scale = std::max(w2.colwise().norm().maxCoeff(), std::numeric_limits<double>::min());
  const double tol = 1e-8 * scale;
  std::vector<char> used(static_cast<std::size_t>(w2.cols()), 0);
  for (Eigen::Index t = 0; t < b2.cols(); ++t) {
    const int pivot = pivots[static_cast<std::size_t>(t)];
    const double pivot_dist = (w2.col(pivot) - b2.col(t)).norm();
    int best = pivot;
    double best_dist = pivot_dist;
    for (Eigen::Index c = 0; c < w2.cols(); ++c) {
      const double d = (w2.col(c) - b2.col(t)).norm();
      if (d < best_dist - 1e-12 * scale) {
        best_dist = d;
        best = static_cast<int>(c);
      }
    }
    if (best != pivot || best_dist > tol || used[static_cast<std::size_t>(best)]) return false;
    used[static_cast<std::size_t>(best)] = 1;
  }
  return true;
}

// Applies S^power to every column of x.
// Number of nodes whose largest interpolation coefficient (column i of bt,
// one row per center) falls on each center. Row scalings common to a column
// do not change the assignment.
Vector cell_weights(const Matrix& bt) {
  Vector w = Vector::Zero(bt.rows());
  for (Eigen::Index i = 0; i < bt.cols(); ++i) {
    Eigen::Index best = 0;
    bt.col(i).maxCoeff(&best);
    w(best) += 1.0;
  }
  return w;
}

// Removes the component along the unit vector phi from every column.
void deflate(RowMatrix& x, const Vector& phi) {
  const Eigen::RowVectorXd along = phi.transpose() * x;
  x -= phi * along;
}

// (S - phi phi^T)^power x.
RowMatrix apply_power(const SparseMatrix& s, const Vector& phi, RowMatrix x, long long power) {
  RowMatrix tmp;
  deflate(x, phi);
  for (long long p = 0; p < power; ++p) {
    sparse_times(s, x, tmp);
    x.swap(tmp);
    deflate(x, phi);
  }
  return x;
}

// Sorts the selection ascending and permutes the coefficient rows to match.
void sort_selection(IndexList& selected, Matrix& coefficients) {
  IndexList order(selected.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return selected[static_cast<std::size_t>(a)] < selected[static_cast<std::size_t>(b)]; });
  IndexList sorted(selected.size());
  Matrix c(coefficients.rows(), coefficients.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    sorted[i] = selected[static_cast<std::size_t>(order[i])];
    c.row(static_cast<Eigen::Index>(i)) = coefficients.row(order[i]);
  }
  selected.swap(sorted);
  coefficients.swap(c);
}

IndexList iota_list(int n) {
  IndexList ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

IDFactors interpolative_decomposition(const Matrix& a, int k) { return id_core(a, k, false).factors; }

SketchedID randomized_id_sketch(int rows, int cols, const std::function<Matrix(const Matrix&)>& sketch, int j,
                                int k, int l, std::uint64_t seed) {
  if (!(std::min(rows, cols) > j && j > k && k > l && l >= 0)) {
    std::ostringstream msg;
    msg << "randomized ID needs min(m, n) > j > k > l >= 0, got m=" << rows << " n=" << cols << " j=" << j
        << " k=" << k << " l=" << l;
    throw InvalidParameter(msg.str());
  }
  std::mt19937_64 rng(seed);
  constexpr int kAttempts = 4;  // first try plus three retries
  for (int attempt = 1; attempt <= kAttempts; ++attempt) {
    const Matrix g1 = gaussian_matrix(j, rows, rng);
    const Matrix w = sketch(g1);
    if (w.rows() != j || w.cols() != cols) throw InvalidState("sketch returned a matrix of the wrong shape");
    IDCore core = id_core(w, k, l > 0);
    if (l > 0) {
      const Matrix g2 = gaussian_matrix(l, j, rng);
      if (!recover_indices(g2 * w, g2 * core.q1r11, core.factors.selected)) continue;
    }
    return {std::move(core.factors.selected), std::move(core.factors.coefficients), attempt};
  }
  throw NumericalFailure("randomized ID index recovery failed after " + std::to_string(kAttempts) + " attempts");
}

IDFactors randomized_id(const Matrix& a, int j, int k, int l, std::uint64_t seed) {
  SketchedID s = randomized_id_sketch(static_cast<int>(a.rows()), static_cast<int>(a.cols()),
                                      [&](const Matrix& g1) { return Matrix(g1 * a); }, j, k, l, seed);
  IDFactors f;
  f.requested_rank = k;
  f.selected = std::move(s.selected);
  f.coefficients = std::move(s.coefficients);
  f.permutation = f.selected;
  std::vector<char> in(static_cast<std::size_t>(a.cols()), 0);
  for (int c : f.selected) in[static_cast<std::size_t>(c)] = 1;
  for (int c = 0; c < a.cols(); ++c)
    if (!in[static_cast<std::size_t>(c)]) f.permutation.push_back(c);
  f.columns.resize(a.rows(), f.rank());
  for (int i = 0; i < f.rank(); ++i) f.columns.col(i) = a.col(f.selected[static_cast<std::size_t>(i)]);
  return f;
}

int approximate_rank(const Vector& eigenvalues, double delta, double power) {
  int count = 0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i)
    if (std::pow(std::abs(eigenvalues(i)), power) >= delta) ++count;
  return count;
}

IDEmbeddingResult id_diffusion_embedding(const AffinityKernel& kernel, const DistributionSet& dist,
                                         const EmbedConfig& config, int gamma, std::uint64_t seed,
                                         const SpectralCache* spectrum) {
  config.validate();
  const DiffusionOperator op = build_diffusion_operator(kernel);
  const int n = op.size();
  if (dist.num_nodes() != n) throw InvalidInput("distribution rows do not match kernel size");
  if (gamma < 0 || gamma > n) throw InvalidParameter("gamma must lie in [0, n]");
  const int max_scale = config.resolved_max_scale(n);
  SpectralCache owned;
  if (!spectrum) {
    owned = spectral_decompose(op);
    spectrum = &owned;
  }
  const SparseMatrix& s = op.sym();

  IDEmbeddingResult result;
  auto warn = [&](const std::string& w) { result.warnings.push_back(w); };
  auto rank_at = [&](int k, bool& known) {
    const int r = approximate_rank(spectrum->eigenvalues, config.rank_delta, std::ldexp(1.0, k));
    known = spectrum->complete || r < spectrum->rank();
    return r;
  };

  // The stationary eigenpair of S is exact: phi = D^1/2 1 / |D^1/2 1|, lambda = 1.
  // Everything below works on the deflated S' = S - phi phi^T and adds phi back.
  const Vector phi = op.sqrt_deg().normalized();
  const Matrix scaled = op.sqrt_deg().asDiagonal() * dist.measures;
  const Eigen::RowVectorXd stationary = phi.transpose() * scaled;
  auto full_values = [&](const RowMatrix& deflated) {
    return Matrix(op.inv_sqrt_deg().asDiagonal() * (Matrix(deflated) + phi * stationary));
  };

  ScaleStack& stack = result.stack;
  RowMatrix y = apply_power(s, phi, RowMatrix(scaled), 1);  // S'^p D^1/2 mu while unreduced
  long long p = 1;
  stack.levels.push_back({0, iota_list(n), full_values(y), Vector()});
  {
    bool known = true;
    const int r0 = rank_at(0, known);
    result.profile.entries.push_back({0, r0, n, known});
  }

  bool reduced = false;
  IndexList basis = iota_list(n);
  Matrix g, gamma_gram, coeff_total, c;  // G_k, C C^T, C (nb x n), C D^1/2 mu

  for (int k = 1; k <= max_scale; ++k) {
    bool known = true;
    const int r = rank_at(k, known);
    const int nb = static_cast<int>(basis.size());
    bool reduce = known && r < gamma;
    if (reduce && r >= nb) {
      warn("scale " + std::to_string(k) + ": rank estimate " + std::to_string(r) + " exceeds basis size " +
           std::to_string(nb) + "; reduction skipped");
      reduce = false;
    } else if (reduce && r + 8 >= nb) {
      warn("scale " + std::to_string(k) + ": basis of " + std::to_string(nb) + " too small for a rank-" +
           std::to_string(r) + " randomized ID; reduction skipped");
      reduce = false;
    } else if (!known && r < gamma) {
      warn("scale " + std::to_string(k) + ": rank exceeds the spectral cache (" + std::to_string(r) +
           " eigenpairs); reduction skipped");
    }
    const int l = std::min(5, r - 1);
    const std::uint64_t scale_seed = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(k);

    if (!reduced) {
      if (reduce) {
        // Current operator A = S^p, p = 2^(k-1), available only through products.
        auto sketch = [&](const Matrix& g1) {
          const RowMatrix x = apply_power(s, phi, RowMatrix(g1.transpose()), p);
          return Matrix(x.transpose());
        };
        SketchedID id = randomized_id_sketch(n, n, sketch, r + 8, r, l, scale_seed);
        sort_selection(id.selected, id.coefficients);
        const int kk = static_cast<int>(id.selected.size());
        RowMatrix e = RowMatrix::Zero(n, kk);
        for (int i = 0; i < kk; ++i) e(id.selected[static_cast<std::size_t>(i)], i) = 1.0;
        const RowMatrix cols = apply_power(s, phi, std::move(e), p);
        Matrix gs(kk, kk);
        for (int i = 0; i < kk; ++i) gs.row(i) = cols.row(id.selected[static_cast<std::size_t>(i)]);
        gs = 0.5 * (gs + gs.transpose()).eval();
        coeff_total = std::move(id.coefficients);
        gamma_gram = coeff_total * coeff_total.transpose();
        g = gs * gamma_gram * gs;
        c = coeff_total * (op.sqrt_deg().asDiagonal() * dist.measures);
        basis = std::move(id.selected);
        reduced = true;
      } else {
        y = apply_power(s, phi, std::move(y), p);
        p *= 2;
        stack.levels.push_back({k, iota_list(n), full_values(y), Vector()});
        result.profile.entries.push_back({k, r, n, known});
        continue;
      }
    } else if (reduce) {
      SketchedID id = randomized_id_sketch(nb, nb, [&](const Matrix& g1) { return Matrix(g1 * g); }, r + 8, r, l,
                                           scale_seed);
      sort_selection(id.selected, id.coefficients);
      const int kk = static_cast<int>(id.selected.size());
      Matrix gs(kk, kk);
      for (int a = 0; a < kk; ++a)
        for (int b = 0; b < kk; ++b) gs(a, b) = g(id.selected[static_cast<std::size_t>(a)], id.selected[static_cast<std::size_t>(b)]);
      coeff_total = id.coefficients * coeff_total;
      gamma_gram = id.coefficients * gamma_gram * id.coefficients.transpose();
      c = id.coefficients * c;
      IndexList next(static_cast<std::size_t>(kk));
      for (int a = 0; a < kk; ++a) next[static_cast<std::size_t>(a)] = basis[static_cast<std::size_t>(id.selected[static_cast<std::size_t>(a)])];
      basis = std::move(next);
      g = gs * gamma_gram * gs;
    } else {
      g = g * gamma_gram * g;
    }
    g = 0.5 * (g + g.transpose()).eval();

    const int size = static_cast<int>(basis.size());
    Matrix values = g * c;
    for (int i = 0; i < size; ++i) {
      const auto node = basis[static_cast<std::size_t>(i)];
      values.row(i) = op.inv_sqrt_deg()(node) * (values.row(i) + phi(node) * stationary);
    }
    // Node i interpolates from the basis through row i of D^-1/2 C^T D_J^1/2.
    const Vector sqrt_deg_basis = Eigen::Map<const Eigen::VectorXi>(basis.data(), size).unaryExpr([&](int v) { return op.sqrt_deg()(v); });
    stack.levels.push_back({k, basis, std::move(values), cell_weights(sqrt_deg_basis.asDiagonal() * coeff_total)});
    result.profile.entries.push_back({k, r, size, known});
  }
  result.embedding = assemble_embedding(stack, config.alpha, max_scale);
  result.embedding.config = config;
  result.embedding.config.max_scale = max_scale;
  result.embedding.config.method = EmbedMethod::interpolative;
  return result;
}

ScaleStack subsample_embedding(const ScaleStack& stack, const SpectralCache& spectrum, const DiffusionOperator& op,
                               const SubsampleOptions& options) {
  if (!(options.delta >= 0.0)) throw InvalidParameter("delta must be nonnegative");
  if (options.n_scales_kept < 0) throw InvalidParameter("number of kept scales must be nonnegative");
  if (stack.levels.empty()) throw InvalidState("scale stack is empty");
  const int n = op.size();
  for (const auto& level : stack.levels)
    if (static_cast<int>(level.centers.size()) != n || level.values.rows() != n)
      throw InvalidState("subsampling needs a stack computed on the full node set");
  if (spectrum.eigenvectors.rows() != n) throw InvalidState("spectral cache was computed for a different graph");

  const int top = stack.max_scale();
  const int first = options.n_scales_kept > 0 ? std::max(stack.first_scale(), top - options.n_scales_kept + 1)
                                              : stack.first_scale();
  ScaleStack out;
  for (const auto& level : stack.levels)
    if (level.scale >= first) out.levels.push_back(level);
  if (options.delta == 0.0) return out;

  IndexList coarser;  // centers of the next larger scale
  for (auto it = out.levels.rbegin(); it != out.levels.rend(); ++it) {
    ScaleLevel& level = *it;
    const double power = std::ldexp(1.0, level.scale);
    const int r = std::min(approximate_rank(spectrum.eigenvalues, options.delta, power), n);
    if (r >= n) {
      level.centers = iota_list(n);
      coarser = level.centers;
      continue;
    }
    // Rows of P^t = D^-1/2 U L^t U^T D^1/2 are spanned by the rows of F = D^-1/2 U_R L^t.
    const int rows = std::min(r, spectrum.rank());
    Matrix ft = spectrum.eigenvectors.leftCols(rows).transpose();
    for (int i = 0; i < rows; ++i) ft.row(i) *= std::pow(std::abs(spectrum.eigenvalues(i)), power);
    ft = ft * op.inv_sqrt_deg().asDiagonal();
    IndexList own;
    if (options.rule == CenterRule::operator_rows) {
      Eigen::ColPivHouseholderQR<Matrix> qr(ft);
      const auto& perm = qr.colsPermutation().indices();
      own.assign(perm.data(), perm.data() + std::max(1, std::min(rows, static_cast<int>(qr.rank()))));
    } else {
      Eigen::ColPivHouseholderQR<Matrix> qr(level.values.transpose());
      const auto& perm = qr.colsPermutation().indices();
      own.assign(perm.data(), perm.data() + r);
    }
    IndexList merged;
    std::sort(own.begin(), own.end());
    std::set_union(own.begin(), own.end(), coarser.begin(), coarser.end(), std::back_inserter(merged));
    const auto size = static_cast<Eigen::Index>(merged.size());
    Matrix values(size, level.values.cols());
    Matrix fj(ft.rows(), size);
    for (Eigen::Index i = 0; i < size; ++i) {
      values.row(i) = level.values.row(merged[static_cast<std::size_t>(i)]);
      fj.col(i) = ft.col(merged[static_cast<std::size_t>(i)]);
    }
    // Min-norm interpolation F ~ B F[J,:].
    level.weights = cell_weights(Eigen::CompleteOrthogonalDecomposition<Matrix>(fj).solve(ft));
    level.centers = merged;
    level.values = std::move(values);
    coarser = std::move(merged);
  }
  return out;
}

}  // namespace demd
