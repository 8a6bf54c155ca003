#pragma once

#include <Eigen/Dense>

namespace histosge {

/// Row-major so a row is one spot's contiguous expression or feature vector.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace histosge
