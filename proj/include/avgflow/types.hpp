#pragma once

#include <Eigen/Dense>

namespace avgflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace avgflow
