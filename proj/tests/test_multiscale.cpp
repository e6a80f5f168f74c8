#include <cmath>

#include "doctest.h"
#include "demd/error.hpp"
#include "demd/multiscale.hpp"
#include "support.hpp"

using namespace demd;
using testing_support::random_cloud;

namespace {

// Brute-force P^(2^k) mu by repeated application of P.
std::vector<Matrix> repeated_powers(const DiffusionOperator& op, const Matrix& mu, int max_scale) {
  std::vector<Matrix> out;
  RowMatrix cur = op.apply(RowMatrix(mu));
  long long steps = 1;
  out.push_back(Matrix(cur));
  for (int k = 1; k <= max_scale; ++k) {
    const long long target = 1LL << k;
    while (steps < target) {
      cur = op.apply(cur);
      ++steps;
    }
    out.push_back(Matrix(cur));
  }
  return out;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Power-reduction identity for x^N in the Chebyshev basis.
Vector power_reduction(int n, int order) {
  Vector c = Vector::Zero(order + 1);
  for (int j = n % 2; j <= std::min(n, order); j += 2) {
    const double b = binomial(n, (n - j) / 2);
    c(j) = (j == 0 ? 1.0 : 2.0) * b / std::pow(2.0, n);
  }
  return c;
}

DiffusionOperator small_operator(std::uint64_t seed, int n = 60) {
  auto pc = random_cloud(n, 2, 3, seed);
  return build_diffusion_operator(knn_affinity(pc, 6, BandwidthRule::adaptive()));
}

}  // namespace

TEST_CASE("indicator distributions") {
  auto d = indicator_distributions({0, 0, 1}, 2);
  Matrix expect(3, 2);
  expect << 0.5, 0, 0.5, 0, 0, 1;
  CHECK(d.measures == expect);
  CHECK(d.counts == std::vector<int>{2, 1});
  auto u = indicator_distributions({0, 0, 0, 0}, 1);
  CHECK(u.measures.isConstant(0.25));
  CHECK_THROWS_AS(indicator_distributions({0, 0, 2}, 3), InvalidInput);
  CHECK_THROWS_AS(DistributionSet::from_measures(Matrix::Constant(2, 1, 0.4)), InvalidInput);
}

TEST_CASE("chebyshev coefficients of small powers") {
  const Vector c1 = chebyshev_coefficients(1, 5);
  CHECK(std::abs(c1(1) - 1.0) < 1e-14);
  CHECK((c1 - power_reduction(1, 5)).cwiseAbs().maxCoeff() < 1e-14);
  const Vector c2 = chebyshev_coefficients(2, 4);
  CHECK(c2(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(c2(2) == doctest::Approx(0.5).epsilon(1e-14));
  const Vector c4 = chebyshev_coefficients(4, 6);
  CHECK(c4(0) == doctest::Approx(3.0 / 8).epsilon(1e-14));
  CHECK(c4(2) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(c4(4) == doctest::Approx(1.0 / 8).epsilon(1e-14));
  CHECK(std::abs(c4(1)) + std::abs(c4(3)) + std::abs(c4(5)) + std::abs(c4(6)) < 1e-14);
  for (int n : {8, 16, 32, 64})
    CHECK((chebyshev_coefficients(n, n + 3) - power_reduction(n, n + 3)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("exact path on the two-node graph") {
  auto op = build_diffusion_operator(testing_support::from_dense(Matrix::Ones(2, 2)));
  auto dist = DistributionSet::from_measures((Matrix(2, 1) << 1.0, 0.0).finished());
  auto stack = diffuse_dyadic_exact(op, spectral_decompose(op), dist, 3);
  CHECK(stack.levels[0].values(0, 0) == doctest::Approx(0.5));
  CHECK(stack.levels[0].values(1, 0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(diffuse_dyadic_exact(op, spectral_decompose(op), dist, 0), InvalidParameter);
}

TEST_CASE("exact path matches repeated multiplication") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto op = small_operator(seed, 80 + static_cast<int>(seed) * 20);
    auto labels = std::vector<int>(static_cast<std::size_t>(op.size()));
    for (int i = 0; i < op.size(); ++i) labels[static_cast<std::size_t>(i)] = i % 3;
    auto dist = indicator_distributions(labels, 3);
    auto stack = diffuse_dyadic_exact(op, spectral_decompose(op), dist, 8);
    auto brute = repeated_powers(op, dist.measures, 8);
    for (int k = 0; k <= 8; ++k)
      CHECK((stack.levels[static_cast<std::size_t>(k)].values - brute[static_cast<std::size_t>(k)]).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("chebyshev path with full order equals exact path") {
  auto op = small_operator(9, 120);
  std::vector<int> labels(120);
  for (int i = 0; i < 120; ++i) labels[static_cast<std::size_t>(i)] = i / 40;
  auto dist = indicator_distributions(labels, 3);
  const int k = 6;
  auto exact = diffuse_dyadic_exact(op, spectral_decompose(op), dist, k);
  auto cheb = diffuse_dyadic_chebyshev(op, dist, k, 1 << k);
  for (int l = 0; l <= k; ++l)
    CHECK((exact.levels[static_cast<std::size_t>(l)].values - cheb.levels[static_cast<std::size_t>(l)].values).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("truncated spectral cache is rejected by the exact path") {
  auto op = small_operator(3, 100);
  auto dist = indicator_distributions(std::vector<int>(100, 0), 1);
  CHECK_THROWS_AS(diffuse_dyadic_exact(op, spectral_decompose(op, 10), dist, 3), InvalidState);
}

TEST_CASE("diffused values stay within the input range") {
  auto op = small_operator(21, 90);
  std::vector<int> labels(90);
  for (int i = 0; i < 90; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
  auto dist = indicator_distributions(labels, 3);
  auto stack = diffuse_dyadic_exact(op, spectral_decompose(op), dist, 8);
  for (const auto& level : stack.levels)
    for (int j = 0; j < 3; ++j) {
      CHECK(level.values.col(j).minCoeff() >= dist.measures.col(j).minCoeff() - 1e-12);
      CHECK(level.values.col(j).maxCoeff() <= dist.measures.col(j).maxCoeff() + 1e-12);
    }
}

TEST_CASE("assembly weights and blocks") {
  ScaleStack stack;
  Matrix v0(2, 2), v1(2, 2);
  v0 << 0.6, 0.1, 0.4, 0.9;
  v1 << 0.5, 0.3, 0.5, 0.7;
  stack.levels.push_back({0, {0, 1}, v0});
  stack.levels.push_back({1, {0, 1}, v1});
  auto emb = assemble_embedding(stack, 0.5, 1);
  REQUIRE(emb.bins.cols() == 4);
  CHECK(emb.bins(0, 0) == doctest::Approx(v1(0, 0) - v0(0, 0)));
  CHECK(emb.bins(1, 3) == doctest::Approx(v1(1, 1)));
  CHECK(emb.blocks[0].weight == 1.0);

  // Larger scales carry larger weights.
  auto op = small_operator(4);
  auto dist = indicator_distributions(std::vector<int>(60, 0), 1);
  auto big = assemble_embedding(diffuse_dyadic_chebyshev(op, dist, 9, 8), 0.4, 9);
  for (std::size_t b = 1; b + 1 < big.blocks.size(); ++b) CHECK(big.blocks[b].weight > big.blocks[b - 1].weight);

  ScaleStack bad = stack;
  bad.levels[1].centers = {0, 5};
  CHECK_THROWS_AS(assemble_embedding(bad, 0.5, 1), InvalidState);
  CHECK_THROWS_AS(assemble_embedding(stack, 0.5, 2), InvalidState);

  // Center weights scale every entry of the coarser center.
  ScaleStack weighted = stack;
  weighted.levels[1].weights = (Vector(2) << 3.0, 0.5).finished();
  auto we = assemble_embedding(weighted, 0.5, 1);
  CHECK(we.bins(0, 0) == doctest::Approx(3.0 * (v1(0, 0) - v0(0, 0))));
  CHECK(we.bins(1, 1) == doctest::Approx(0.5 * (v1(1, 1) - v0(1, 1))));
  CHECK(we.bins(1, 3) == doctest::Approx(0.5 * v1(1, 1)));
  weighted.levels[1].weights = Vector::Ones(3);
  CHECK_THROWS_AS(assemble_embedding(weighted, 0.5, 1), InvalidState);
}

TEST_CASE("identical distributions embed identically") {
  auto op = small_operator(6);
  Matrix mu = Matrix::Zero(60, 2);
  mu(3, 0) = mu(3, 1) = 1.0;
  auto emb = embed_distributions(op, DistributionSet::from_measures(mu), EmbedConfig{});
  CHECK((emb.bins.row(0) - emb.bins.row(1)).cwiseAbs().sum() == 0.0);
}

TEST_CASE("config validation") {
  EmbedConfig c;
  CHECK_NOTHROW(c.validate());
  c.alpha = 0.7;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c.alpha = 0.5;
  c.cheb_order = 0;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  CHECK(EmbedConfig{}.resolved_max_scale(1000) == 10);
  CHECK(EmbedConfig{}.resolved_max_scale(10) == 8);
  CHECK(parse_embed_method("id") == EmbedMethod::interpolative);
  CHECK_THROWS_AS(parse_embed_method("sinkhorn"), InvalidParameter);
}

TEST_CASE("max scale from the spectral gap") {
  // 0.99^(2^10) = 3.4e-5 is above 1e-3/32, 0.99^(2^11) = 1.2e-9 is below.
  CHECK(max_scale_from_gap(0.99, 1.0 / 32.0, 1e-3, 1024) == 11);
  CHECK(max_scale_from_gap(0.0, 0.5, 1e-3, 2) == 8);
  CHECK(max_scale_from_gap(0.9999999, 0.01, 1e-3, 1000) == 14);
  for (int n : {16, 100, 1000, 5000})
    for (double lam : {0.5, 0.9, 0.999, 0.999999}) CHECK(max_scale_from_gap(lam, 0.01, 1e-3, n) <= static_cast<int>(std::ceil(std::log2(n))) + 4);
  auto op = build_diffusion_operator(testing_support::from_dense(Matrix::Ones(2, 2)));
  CHECK(default_max_scale(op, 1e-3) == 8);
}

TEST_CASE("diffusions mix by the default max scale") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto op = small_operator(50 + seed, 150);
    REQUIRE(op.connectivity().connected());
    const int k = default_max_scale(op, 1e-3);
    std::vector<int> labels(150);
    for (int i = 0; i < 150; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
    auto stack = diffuse_dyadic_exact(op, spectral_decompose(op), indicator_distributions(labels, 3), k);
    const Matrix& top = stack.levels.back().values;
    for (int j = 0; j < 3; ++j) CHECK(top.col(j).maxCoeff() - top.col(j).minCoeff() <= 1e-2);
  }
}
