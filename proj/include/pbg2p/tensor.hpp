#pragma once

#include <Eigen/Core>

namespace pbg2p {

// Every parameter and activation is a dense row-major matrix; vectors are 1 x n.
template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace pbg2p
