#include <random>

#include <Eigen/SVD>

#include "doctest.h"
#include "demd/error.hpp"
#include "demd/lowrank.hpp"
#include "demd/metric.hpp"
#include "demd/oracle.hpp"
#include "support.hpp"

using namespace demd;
using testing_support::random_cloud;

namespace {

Matrix gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix a(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) a(i, j) = normal(rng);
  return a;
}

double spectral_norm(const Matrix& a) { return Eigen::BDCSVD<Matrix>(a).singularValues()(0); }

double singular_value(const Matrix& a, int i) { return Eigen::BDCSVD<Matrix>(a).singularValues()(i); }

double id_bound(int k, int n, double sigma) { return std::sqrt(4.0 * k * (n - k) + 1.0) * sigma; }

}  // namespace

TEST_CASE("deterministic ID on simple matrices") {
  Vector u = Vector::LinSpaced(6, 1, 6), v = Vector::LinSpaced(9, -2, 3);
  const Matrix r1 = u * v.transpose();
  auto f = interpolative_decomposition(r1, 1);
  CHECK((r1 - f.columns * f.coefficients).cwiseAbs().maxCoeff() <= 1e-12);

  const Matrix eye = Matrix::Identity(7, 7);
  auto g = interpolative_decomposition(eye, 6);
  CHECK(spectral_norm(eye - g.columns * g.coefficients) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(interpolative_decomposition(eye, 7), InvalidParameter);
  CHECK_THROWS_AS(interpolative_decomposition(eye, 0), InvalidParameter);
}

TEST_CASE("singular R11 reduces the rank") {
  Vector u = Vector::LinSpaced(5, 1, 5), v = Vector::LinSpaced(8, 1, 8);
  const Matrix r1 = u * v.transpose();
  auto f = interpolative_decomposition(r1, 3);
  CHECK(f.requested_rank == 3);
  CHECK(f.rank() == 1);
  CHECK((r1 - f.columns * f.coefficients).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("ID error bound and identity block on random matrices") {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = gaussian(50, 80, rng);
    auto f = interpolative_decomposition(a, 20);
    REQUIRE(f.rank() == 20);
    CHECK(spectral_norm(a - f.columns * f.coefficients) <= id_bound(20, 80, singular_value(a, 20)));
    for (int i = 0; i < 20; ++i) {
      CHECK(f.columns.col(i) == a.col(f.selected[static_cast<std::size_t>(i)]));
      Vector e = Vector::Zero(20);
      e(i) = 1.0;
      CHECK(f.coefficients.col(f.selected[static_cast<std::size_t>(i)]) == e);
    }
  }
}

TEST_CASE("randomized ID") {
  std::mt19937_64 rng(7);
  const Matrix low = gaussian(120, 10, rng) * gaussian(10, 150, rng);
  auto f = randomized_id(low, 18, 10, 5, 42);
  CHECK(spectral_norm(low - f.columns * f.coefficients) <= 1e-8 * spectral_norm(low));
  auto g = randomized_id(low, 18, 10, 5, 42);
  CHECK(f.selected == g.selected);
  CHECK(f.coefficients == g.coefficients);

  CHECK_THROWS_AS(randomized_id(low, 10, 10, 5, 1), InvalidParameter);
  CHECK_THROWS_AS(randomized_id(low, 18, 10, 10, 1), InvalidParameter);
  CHECK_THROWS_AS(randomized_id(low, 200, 10, 5, 1), InvalidParameter);

  int within = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = gaussian(200, 30, rng) * gaussian(30, 300, rng);
    auto r = randomized_id(a, 38, 30, 5, 1000 + static_cast<std::uint64_t>(trial));
    if (spectral_norm(a - r.columns * r.coefficients) <= id_bound(30, 300, singular_value(a, 30)) + 1e-6) ++within;
  }
  CHECK(within >= 48);
}

TEST_CASE("approximate rank") {
  CHECK(approximate_rank((Vector(2) << 1, 0.5).finished(), 0.6, 1) == 1);
  CHECK(approximate_rank((Vector(2) << 1, 0.9).finished(), 0.01, 16) == 2);
  CHECK(approximate_rank(Vector::Ones(9), 1.0, 1 << 20) == 9);
  const Vector lam = Vector::LinSpaced(50, 1.0, 0.01);
  for (int k = 0; k < 10; ++k) {
    CHECK(approximate_rank(lam, 1e-6, std::ldexp(1.0, k + 1)) <= approximate_rank(lam, 1e-6, std::ldexp(1.0, k)));
    CHECK(approximate_rank(lam, 1e-3, std::ldexp(1.0, k)) <= approximate_rank(lam, 1e-6, std::ldexp(1.0, k)));
  }
}

TEST_CASE("ID embedding without reduction reproduces repeated powers") {
  auto pc = random_cloud(150, 2, 4, 88);
  auto kernel = knn_affinity(pc, 8, BandwidthRule::adaptive());
  auto dist = indicator_distributions(pc.labels, 4);
  EmbedConfig cfg;
  cfg.max_scale = 7;
  auto res = id_diffusion_embedding(kernel, dist, cfg, 0);
  auto op = build_diffusion_operator(kernel);
  RowMatrix cur = op.apply(RowMatrix(dist.measures));
  long long steps = 1;
  for (int k = 0; k <= 7; ++k) {
    while (steps < (1LL << k)) {
      cur = op.apply(cur);
      ++steps;
    }
    CHECK((res.stack.levels[static_cast<std::size_t>(k)].values - Matrix(cur)).cwiseAbs().maxCoeff() <= 1e-6);
  }
  cfg.method = EmbedMethod::exact_spectral;
  auto exact = embed_distributions(op, dist, cfg);
  const Vector a = upper_triangle(pairwise_distances(res.embedding).values);
  const Vector b = upper_triangle(pairwise_distances(exact).values);
  CHECK(spearman_rho(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(res.warnings.empty());
}

TEST_CASE("ID embedding with reduction") {
  auto pc = random_cloud(300, 2, 6, 5);
  auto kernel = knn_affinity(pc, 10, BandwidthRule::adaptive());
  auto dist = indicator_distributions(pc.labels, 6);
  EmbedConfig cfg;
  cfg.max_scale = 9;
  cfg.rank_delta = 1e-6;
  auto res = id_diffusion_embedding(kernel, dist, cfg, 300, 3);
  // Ranks and basis sizes never grow.
  for (std::size_t t = 1; t < res.profile.entries.size(); ++t) {
    CHECK(res.profile.entries[t].rank <= res.profile.entries[t - 1].rank);
    CHECK(res.profile.entries[t].basis_size <= res.profile.entries[t - 1].basis_size);
  }
  CHECK(res.profile.entries.back().basis_size < 300);
  // Every node is assigned to exactly one center of a reduced level.
  for (const auto& level : res.stack.levels)
    if (level.weights.size()) CHECK(level.weights.sum() == 300.0);

  // Values at the centers converge to the exact levels as delta shrinks.
  auto op = build_diffusion_operator(kernel);
  const auto stack = diffuse_dyadic_exact(op, spectral_decompose(op), dist, 9);
  auto max_error = [&](const ScaleStack& reduced) {
    double err = 0.0;
    for (const auto& level : reduced.levels) {
      const Matrix& full = stack.levels[static_cast<std::size_t>(level.scale)].values;
      for (std::size_t i = 0; i < level.centers.size(); ++i)
        err = std::max(err, (level.values.row(static_cast<Eigen::Index>(i)) - full.row(level.centers[i])).cwiseAbs().maxCoeff());
    }
    return err;
  };
  EmbedConfig tight = cfg;
  tight.rank_delta = 1e-12;
  const double loose_error = max_error(res.stack);
  const double tight_error = max_error(id_diffusion_embedding(kernel, dist, tight, 300, 3).stack);
  CHECK(tight_error <= 1e-6);
  CHECK(tight_error < 1e-2 * loose_error);

  // Identical distribution columns embed identically.
  Matrix mu(300, 2);
  mu.col(0) = dist.measures.col(2);
  mu.col(1) = dist.measures.col(2);
  auto twin = id_diffusion_embedding(kernel, DistributionSet::from_measures(mu), cfg, 300, 3);
  CHECK((twin.embedding.bins.row(0) - twin.embedding.bins.row(1)).cwiseAbs().sum() == 0.0);

  auto again = id_diffusion_embedding(kernel, dist, cfg, 300, 3);
  CHECK(again.embedding.bins == res.embedding.bins);
  CHECK_THROWS_AS(id_diffusion_embedding(kernel, dist, cfg, 301), InvalidParameter);
}

TEST_CASE("subsampling") {
  auto pc = random_cloud(200, 2, 5, 19);
  auto op = build_diffusion_operator(knn_affinity(pc, 8, BandwidthRule::adaptive()));
  auto dist = indicator_distributions(pc.labels, 5);
  auto spec = spectral_decompose(op);
  auto stack = diffuse_dyadic_chebyshev(op, dist, 10, 32);

  SubsampleOptions none;
  none.delta = 0.0;
  auto same = subsample_embedding(stack, spec, op, none);
  REQUIRE(same.levels.size() == stack.levels.size());
  for (std::size_t l = 0; l < stack.levels.size(); ++l) CHECK(same.levels[l].values == stack.levels[l].values);

  for (CenterRule rule : {CenterRule::operator_rows, CenterRule::level_values}) {
    SubsampleOptions opts;
    opts.delta = 1e-6;
    opts.n_scales_kept = 6;
    opts.rule = rule;
    auto sub = subsample_embedding(stack, spec, op, opts);
    REQUIRE(sub.levels.size() == 6);
    CHECK(sub.first_scale() == 5);
    for (std::size_t l = 0; l + 1 < sub.levels.size(); ++l) {
      const auto& fine = sub.levels[l].centers;
      const auto& coarse = sub.levels[l + 1].centers;
      CHECK(std::includes(fine.begin(), fine.end(), coarse.begin(), coarse.end()));
    }
    CHECK(sub.total_centers() < stack.total_centers());
    for (const auto& level : sub.levels) {
      CHECK(level.weights.minCoeff() >= 0.0);
      CHECK(level.weights.sum() == 200.0);
    }
    CHECK_NOTHROW(assemble_embedding(sub, 0.5, 10));
  }

  // Rapid mixing: a complete graph has |lambda_1| tiny, so one center remains at the top.
  auto complete = build_diffusion_operator(testing_support::from_dense(Matrix::Ones(30, 30)));
  auto dist1 = indicator_distributions(std::vector<int>(30, 0), 1);
  auto cstack = diffuse_dyadic_chebyshev(complete, dist1, 4, 16);
  SubsampleOptions opts;
  auto csub = subsample_embedding(cstack, spectral_decompose(complete), complete, opts);
  CHECK(csub.levels.back().centers.size() == 1);
}
