#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace gnn_esr {

using Index = std::size_t;
using Edge = std::pair<Index, Index>;
using Label = std::int64_t;

/// Dense matrices are row-major: node-feature rows are contiguous, which the
/// sparse aggregation kernels rely on.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

}  // namespace gnn_esr
