#include <random>

#include "doctest.h"
#include "demd/error.hpp"
#include "demd/metric.hpp"
#include "support.hpp"

using namespace demd;

namespace {

MultiscaleEmbedding from_rows(const Matrix& rows) {
  MultiscaleEmbedding e;
  e.bins = rows;
  return e;
}

Matrix random_rows(int m, int l, std::uint64_t seed, int levels = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, std::max(levels, 1));
  Matrix x(m, l);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < l; ++j) x(i, j) = levels > 0 ? coarse(rng) : unif(rng);
  return x;
}

IndexList brute(const Matrix& x, int q, int k) {
  std::vector<std::pair<double, int>> c;
  for (int j = 0; j < x.rows(); ++j)
    if (j != q) c.emplace_back(diffusion_emd(x.row(q), x.row(j)), j);
  std::sort(c.begin(), c.end());
  IndexList out;
  for (int t = 0; t < k; ++t) out.push_back(c[static_cast<std::size_t>(t)].second);
  return out;
}

}  // namespace

TEST_CASE("scalar embeddings") {
  Matrix x(3, 1);
  x << 0, 1, 3;
  auto d = pairwise_distances(from_rows(x));
  Matrix expect(3, 3);
  expect << 0, 1, 3, 1, 0, 2, 3, 2, 0;
  CHECK(d.values == expect);
  CHECK_THROWS_AS(pairwise_distances(from_rows(Matrix::Zero(1, 3))), InvalidInput);
}

TEST_CASE("diffusion emd basics") {
  const Eigen::RowVectorXd a = Eigen::RowVectorXd::LinSpaced(7, -1, 2);
  const Eigen::RowVectorXd b = Eigen::RowVectorXd::LinSpaced(7, 3, -2);
  CHECK(diffusion_emd(a, a) == 0.0);
  CHECK(diffusion_emd(a, b) == diffusion_emd(b, a));
  CHECK_THROWS_AS(diffusion_emd(a, Eigen::RowVectorXd::Zero(3)), InvalidInput);
}

TEST_CASE("metric axioms on random embeddings") {
  const Matrix x = random_rows(30, 40, 1);
  const Matrix d = pairwise_distances(from_rows(x)).values;
  CHECK(d == d.transpose());
  CHECK(d.diagonal().isZero(0.0));
  CHECK(d.minCoeff() >= 0.0);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j)
      for (int k = 0; k < 30; ++k) CHECK(d(i, j) <= d(i, k) + d(k, j) + 1e-12);
}

TEST_CASE("duplicate rows") {
  Matrix x = random_rows(6, 5, 2);
  x.row(4) = x.row(1);
  const Matrix d = pairwise_distances(from_rows(x)).values;
  CHECK(d(1, 4) == 0.0);
  CHECK(knn_query(from_rows(x), 1, 1)[0] == 4);
  CHECK(knn_query(from_rows(x), 4, 1)[0] == 1);
}

TEST_CASE("knn covers all other rows at k = m - 1") {
  const Matrix x = random_rows(8, 3, 3);
  auto nn = knn_query(from_rows(x), 2, 7);
  std::sort(nn.begin(), nn.end());
  CHECK(nn == IndexList{0, 1, 3, 4, 5, 6, 7});
  CHECK_THROWS_AS(knn_query(from_rows(x), 0, 8), InvalidParameter);
  CHECK_THROWS_AS(knn_query(from_rows(x), 0, 0), InvalidParameter);
}

TEST_CASE("metric tree equals brute force") {
  for (int levels : {0, 3}) {  // continuous values, then heavily tied ones
    const Matrix x = random_rows(1000, 12, 40 + levels, levels);
    const MetricTree tree{RowMatrix(x)};
    for (int q = 0; q < 1000; q += 7)
      for (int k : {1, 5, 10}) CHECK(tree.query(q, k) == brute(x, q, k));
    const auto all = knn_all(x, 5);
    for (int q = 0; q < 1000; q += 13) CHECK(all[static_cast<std::size_t>(q)] == brute(x, q, 5));
  }
}

TEST_CASE("block scaling acts per block") {
  Matrix x = random_rows(10, 6, 9);
  Matrix y = x;
  y.rightCols(3) *= 2.5;
  const Matrix dx = pairwise_distances(from_rows(x)).values;
  const Matrix dy = pairwise_distances(from_rows(y)).values;
  const Matrix left = pairwise_l1(x.leftCols(3));
  const Matrix right = pairwise_l1(x.rightCols(3));
  CHECK((dx - left - right).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((dy - left - 2.5 * right).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sample kernel") {
  Matrix x = random_rows(12, 4, 10);
  x.row(7) = x.row(3);
  auto d = pairwise_distances(from_rows(x));
  auto k = sample_kernel(d, 3, BandwidthRule::adaptive());
  const Matrix w(k.weights);
  CHECK(w(3, 7) == 1.0);
  CHECK(w == w.transpose());
  for (int i = 0; i < 12; ++i) CHECK(w.row(i).maxCoeff() > 0.0);
  auto op = build_diffusion_operator(k);
  CHECK((op.transition_dense().rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-10);
}
