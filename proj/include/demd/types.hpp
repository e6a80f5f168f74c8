#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <vector>

namespace demd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Row-major dense matrix; used for node x distribution blocks so that a
/// node's values across distributions are contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;
using IndexList = std::vector<int>;

}  // namespace demd
