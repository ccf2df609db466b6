#pragma once

#include <Eigen/Dense>

namespace obsinfo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Parameter vector of the linear predictor.
using Theta = Vector;

}  // namespace obsinfo
