#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <arpack.h>

#include "demd/error.hpp"
#include "demd/graph.hpp"

namespace demd {

namespace {

// Sorts eigenpairs by decreasing magnitude; ties keep the larger signed value first.
std::vector<int> magnitude_order(const Vector& values) {
  std::vector<int> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ma = std::abs(values(a)), mb = std::abs(values(b));
    if (ma != mb) return ma > mb;
    return values(a) > values(b);
  });
  return order;
}

SpectralCache dense_decompose(const SparseMatrix& a, int rank) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(Matrix(a), Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericalFailure("dense symmetric eigensolver failed");
  const auto order = magnitude_order(solver.eigenvalues());
  SpectralCache cache;
  cache.eigenvalues.resize(rank);
  cache.eigenvectors.resize(a.rows(), rank);
  for (int i = 0; i < rank; ++i) {
    cache.eigenvalues(i) = solver.eigenvalues()(order[static_cast<std::size_t>(i)]);
    cache.eigenvectors.col(i) = solver.eigenvectors().col(order[static_cast<std::size_t>(i)]);
  }
  cache.complete = rank == a.rows();
  return cache;
}

}  // namespace

SpectralCache lanczos_top_eigenpairs(const SparseMatrix& a, int rank, double tol, const SpectralOptions& options) {
  const int n = static_cast<int>(a.rows());
  if (rank < 1 || rank > n) throw InvalidParameter("requested rank must lie in [1, n]");
  // ARPACK needs nev < n; the full spectrum is a dense problem anyway.
  if (rank >= n - 1) return dense_decompose(a, rank);
  const int ncv = options.max_krylov > 0 ? std::min(n, options.max_krylov) : std::min(n, std::max(2 * rank + 1, rank + 100));
  if (ncv <= rank) throw InvalidParameter("Krylov dimension must exceed the requested rank");

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  Vector resid(n);
  for (int i = 0; i < n; ++i) resid(i) = normal(rng);

  Matrix v(n, ncv);
  Vector workd(3 * n);
  const int lworkl = ncv * (ncv + 8);
  Vector workl(lworkl);
  a_int iparam[11] = {1, 0, options.max_restarts, 1, 0, 0, 1, 0, 0, 0, 0};
  a_int ipntr[11] = {};
  a_int ido = 0;
  a_int info = 1;  // use resid as the starting vector
  Vector x(n), y(n);
  while (true) {
    dsaupd_c(&ido, "I", n, "LM", rank, tol, resid.data(), ncv, v.data(), n, iparam, ipntr, workd.data(), workl.data(),
             lworkl, &info);
    if (ido != -1 && ido != 1) break;
    x = Eigen::Map<const Vector>(workd.data() + ipntr[0] - 1, n);
    y = sparse_times(a, x);
    Eigen::Map<Vector>(workd.data() + ipntr[1] - 1, n) = y;
  }
  if (info == 1) {
    std::ostringstream msg;
    msg << "Lanczos did not converge: " << iparam[4] << " of " << rank << " eigenpairs after " << iparam[2]
        << " restarts at tol " << tol;
    throw NumericalFailure(msg.str());
  }
  if (info != 0) throw NumericalFailure("ARPACK dsaupd failed with info " + std::to_string(info));

  Vector values(rank);
  Matrix vectors(n, rank);
  std::vector<a_int> select(static_cast<std::size_t>(ncv), 1);
  dseupd_c(1, "A", select.data(), values.data(), vectors.data(), n, 0.0, "I", n, "LM", rank, tol, resid.data(), ncv,
           v.data(), n, iparam, ipntr, workd.data(), workl.data(), lworkl, &info);
  if (info != 0) throw NumericalFailure("ARPACK dseupd failed with info " + std::to_string(info));

  const auto order = magnitude_order(values);
  SpectralCache cache;
  cache.eigenvalues.resize(rank);
  cache.eigenvectors.resize(n, rank);
  for (int i = 0; i < rank; ++i) {
    cache.eigenvalues(i) = values(order[static_cast<std::size_t>(i)]);
    cache.eigenvectors.col(i) = vectors.col(order[static_cast<std::size_t>(i)]);
  }
  cache.complete = false;
  return cache;
}

SpectralCache spectral_decompose(const DiffusionOperator& op, std::optional<int> rank, double tol,
                                 const SpectralOptions& options) {
  const int n = op.size();
  if (rank && (*rank < 1 || *rank > n)) throw InvalidParameter("rank must lie in [1, n]");
  if (!(tol > 0.0)) throw InvalidParameter("tolerance must be positive");
  if (n <= options.dense_cutoff) return dense_decompose(op.sym(), rank.value_or(n));
  const int r = rank.value_or(std::min(n - 1, options.iterative_rank));
  return lanczos_top_eigenpairs(op.sym(), r, tol, options);
}

}  // namespace demd
