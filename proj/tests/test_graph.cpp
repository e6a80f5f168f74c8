#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "demd/error.hpp"
#include "demd/graph.hpp"
#include "support.hpp"

using namespace demd;
using testing_support::dense_gaussian;
using testing_support::dense_transition;
using testing_support::random_cloud;

namespace {

bool bit_symmetric(const SparseMatrix& a) {
  const Matrix d(a);
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (d(i, j) != d(j, i)) return false;
  return true;
}

}  // namespace

TEST_CASE("point cloud validation") {
  Matrix x(3, 2);
  x << 0, 0, 1, 0, 2, 0;
  CHECK_NOTHROW(PointCloud::create(x, {0, 0, 1}));
  CHECK_THROWS_AS(PointCloud::create(x, {0, 0, 2}), InvalidInput);  // id 1 empty
  CHECK_THROWS_AS(PointCloud::create(x, {0, 1}), InvalidInput);
  x(1, 1) = std::nan("");
  CHECK_THROWS_AS(PointCloud::create(x, {0, 0, 1}), InvalidInput);
  CHECK(PointCloud::create(Matrix::Zero(2, 1), {1, 0}).num_distributions == 2);
}

TEST_CASE("gaussian affinity values") {
  const double eps = 0.7;
  Matrix x(3, 1);
  x << 0.0, 0.0, std::sqrt(eps);
  auto pc = PointCloud::create(x, {0, 0, 0});
  auto k = gaussian_affinity(pc, eps);
  const Matrix w(k.weights);
  CHECK(w(0, 1) == 1.0);
  CHECK(w(0, 2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(w(0, 2) == doctest::Approx(0.367879).epsilon(1e-6));
  CHECK(w.diagonal().isOnes());
  CHECK(bit_symmetric(k.weights));

  CHECK_THROWS_AS(gaussian_affinity(pc, 0.0), InvalidParameter);
  CHECK_THROWS_AS(gaussian_affinity(pc, eps, 1.0), InvalidParameter);
}

TEST_CASE("truncated gaussian is symmetric and drops small entries") {
  auto pc = random_cloud(60, 3, 2, 11);
  auto k = gaussian_affinity(pc, 0.5, 0.1);
  CHECK(k.kind == KernelKind::truncated_gaussian);
  CHECK(bit_symmetric(k.weights));
  for (int i = 0; i < k.weights.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(k.weights, i); it; ++it) CHECK(it.value() >= 0.1);
}

TEST_CASE("knn with full neighbourhood equals the dense gaussian") {
  auto pc = random_cloud(40, 2, 1, 5);
  auto full = knn_affinity(pc, 39, BandwidthRule::fixed(0.9));
  auto dense = gaussian_affinity(pc, 0.9, 0.0);
  CHECK((Matrix(full.weights) - Matrix(dense.weights)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("knn symmetrization and size bound") {
  Matrix x(3, 1);
  x << 0.0, 1.0, 2.0;
  auto k = knn_affinity(PointCloud::create(x, {0, 0, 0}), 1, BandwidthRule::fixed(1.0));
  const Matrix w(k.weights);
  CHECK(w(1, 0) > 0.0);
  CHECK(w(1, 2) > 0.0);
  CHECK(w(0, 1) == w(1, 0));

  auto pc = random_cloud(100, 3, 1, 17);
  for (int kk : {1, 5, 10}) {
    auto kn = knn_affinity(pc, kk, BandwidthRule::adaptive());
    CHECK(kn.weights.nonZeros() <= 2 * 100 * kk + 100);
    CHECK(bit_symmetric(kn.weights));
  }
  CHECK_THROWS_AS(knn_affinity(pc, 100, BandwidthRule::adaptive()), InvalidParameter);
  CHECK_THROWS_AS(knn_affinity(pc, 0, BandwidthRule::adaptive()), InvalidParameter);
}

TEST_CASE("nearest neighbours break ties by lower index") {
  Matrix x(4, 1);
  x << 0.0, 1.0, -1.0, 2.0;
  auto nn = nearest_neighbors(x, 2);
  CHECK(nn[0][0].first == 1);
  CHECK(nn[0][1].first == 2);
}

TEST_CASE("two-node operator") {
  Matrix w = Matrix::Ones(2, 2);
  auto op = build_diffusion_operator(testing_support::from_dense(w));
  CHECK((op.transition_dense() - Matrix::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff() < 1e-15);
  const Vector pi = stationary_distribution(op);
  CHECK(pi(0) == doctest::Approx(0.5));
  auto spec = spectral_decompose(op);
  CHECK(spec.complete);
  CHECK(spec.eigenvalues(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(spec.eigenvalues(1)) < 1e-12);
}

TEST_CASE("sparse pipeline matches dense reference") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto pc = random_cloud(30 + static_cast<int>(seed) * 7, 3, 1, seed);
    auto k = gaussian_affinity(pc, 1.5);
    auto op = build_diffusion_operator(k);
    const Matrix ref = dense_transition(dense_gaussian(pc.coords, 1.5));
    const Matrix p = op.transition_dense();
    CHECK((p - ref).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-10);
    CHECK(bit_symmetric(op.sym()));
  }
}

TEST_CASE("zero kernel row is reported") {
  Matrix w = Matrix::Identity(3, 3);
  w(2, 2) = 0.0;
  try {
    build_diffusion_operator(testing_support::from_dense(w));
    FAIL("expected DegenerateNode");
  } catch (const DegenerateNode& e) {
    REQUIRE(e.nodes().size() == 1);
    CHECK(e.nodes()[0] == 2);
  }
}

TEST_CASE("disconnected kernel gives block-diagonal operator") {
  Matrix w = Matrix::Zero(4, 4);
  w.topLeftCorner(2, 2) << 1, 0.5, 0.5, 1;
  w.bottomRightCorner(2, 2) << 1, 0.2, 0.2, 1;
  auto op = build_diffusion_operator(testing_support::from_dense(w));
  CHECK(op.connectivity().num_components == 2);
  const Matrix p = op.transition_dense();
  CHECK(p.topRightCorner(2, 2).isZero(0.0));
  CHECK(p.bottomLeftCorner(2, 2).isZero(0.0));
  CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  const Vector pc = stationary_distribution_per_component(op);
  CHECK(pc.head(2).sum() == doctest::Approx(1.0));
  CHECK(pc.tail(2).sum() == doctest::Approx(1.0));
}

TEST_CASE("stationary distribution of a path") {
  auto op = build_diffusion_operator(testing_support::path_kernel(3));
  Matrix k = Matrix::Zero(3, 3);
  k << 1, 1, 0, 1, 1, 1, 0, 1, 1;
  const Vector q = k.rowwise().sum();
  const Matrix knorm = q.cwiseInverse().asDiagonal() * k * q.cwiseInverse().asDiagonal();
  const Vector d = knorm.rowwise().sum();
  const Vector pi = stationary_distribution(op);
  CHECK((pi - d / d.sum()).cwiseAbs().maxCoeff() < 1e-15);
  const Vector left = op.transition_dense().transpose() * pi;
  CHECK((left - pi).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("operator invariants on random kNN graphs") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto pc = random_cloud(150, 2, 1, 100 + seed);
    auto op = build_diffusion_operator(knn_affinity(pc, 8, BandwidthRule::adaptive()));
    const Vector pi = stationary_distribution(op);
    CHECK((op.transition_dense().transpose() * pi - pi).cwiseAbs().maxCoeff() <= 1e-10);
    for (int trial = 0; trial < 200; ++trial) {
      Vector v(op.size());
      for (int i = 0; i < op.size(); ++i) v(i) = unif(rng);
      const Vector pv = op.apply(v);
      CHECK(pv.minCoeff() >= v.minCoeff() - 1e-12);
      CHECK(pv.maxCoeff() <= v.maxCoeff() + 1e-12);
    }
    auto spec = spectral_decompose(op);
    CHECK(spec.eigenvalues.cwiseAbs().maxCoeff() <= 1.0 + 1e-10);
    CHECK(spec.eigenvalues(0) == doctest::Approx(1.0).epsilon(1e-8));
    const Vector phi0 = op.sqrt_deg().normalized();
    CHECK(std::abs(std::abs(spec.eigenvectors.col(0).dot(phi0)) - 1.0) < 1e-8);
    const Matrix recon = spec.eigenvectors * spec.eigenvalues.asDiagonal() * spec.eigenvectors.transpose();
    const Matrix s(op.sym());
    CHECK((s - recon).norm() <= 1e-8 * s.norm());
  }
}

TEST_CASE("permutation equivariance of the spectrum") {
  auto pc = random_cloud(80, 3, 1, 42);
  std::vector<int> perm(80);
  for (int i = 0; i < 80; ++i) perm[static_cast<std::size_t>(i)] = (i * 37) % 80;
  Matrix y(80, 3);
  for (int i = 0; i < 80; ++i) y.row(i) = pc.coords.row(perm[static_cast<std::size_t>(i)]);
  auto a = spectral_decompose(build_diffusion_operator(gaussian_affinity(pc, 2.0)));
  auto b = spectral_decompose(build_diffusion_operator(gaussian_affinity(PointCloud::create(y, std::vector<int>(80, 0)), 2.0)));
  CHECK((a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("lanczos agrees with the dense solver") {
  auto pc = random_cloud(400, 2, 1, 3);
  auto op = build_diffusion_operator(knn_affinity(pc, 10, BandwidthRule::adaptive()));
  auto dense = spectral_decompose(op);
  auto iter = lanczos_top_eigenpairs(op.sym(), 20, 1e-9);
  CHECK((dense.eigenvalues.head(20) - iter.eigenvalues).cwiseAbs().maxCoeff() < 1e-8);
  const Matrix s(op.sym());
  for (int i = 0; i < 20; ++i) {
    const Vector r = s * iter.eigenvectors.col(i) - iter.eigenvalues(i) * iter.eigenvectors.col(i);
    CHECK(r.cwiseAbs().maxCoeff() <= 1e-8);
  }
  const Matrix gram = iter.eigenvectors.transpose() * iter.eigenvectors;
  CHECK((gram - Matrix::Identity(20, 20)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("lanczos reports non-convergence") {
  auto pc = random_cloud(300, 2, 1, 8);
  auto op = build_diffusion_operator(knn_affinity(pc, 10, BandwidthRule::adaptive()));
  SpectralOptions opts;
  opts.max_krylov = 12;
  opts.max_restarts = 1;
  CHECK_THROWS_AS(lanczos_top_eigenpairs(op.sym(), 10, 1e-14, opts), NumericalFailure);
}

TEST_CASE("bandwidth order is a permutation that narrows a shuffled path") {
  const int n = 200;
  std::vector<int> label(n);
  std::iota(label.begin(), label.end(), 0);
  std::mt19937 rng(3);
  std::shuffle(label.begin(), label.end(), rng);
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i + 1 < n; ++i) {
    t.emplace_back(label[i], label[i + 1], 1.0);
    t.emplace_back(label[i + 1], label[i], 1.0);
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  const IndexList order = bandwidth_order(a);
  REQUIRE(order.size() == static_cast<std::size_t>(n));
  std::vector<int> where(n, -1);
  for (int i = 0; i < n; ++i) where[order[i]] = i;
  CHECK(std::find(where.begin(), where.end(), -1) == where.end());
  int bandwidth = 0;
  for (int i = 0; i + 1 < n; ++i) bandwidth = std::max(bandwidth, std::abs(where[label[i]] - where[label[i + 1]]));
  CHECK(bandwidth == 1);
}
