#pragma once

#include <Eigen/Dense>

namespace episignal {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline double squared_distance(const Eigen::Ref<const RowVector>& a,
                               const Eigen::Ref<const RowVector>& b) {
    return (a - b).squaredNorm();
}

}  // namespace episignal
