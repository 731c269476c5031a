#pragma once

#include <Eigen/Dense>

namespace rgrl {

/// Row-major so that reshapes between (B*N) x F and B x (N*F) are free.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

}  // namespace rgrl
