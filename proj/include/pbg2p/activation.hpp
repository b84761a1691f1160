#pragma once

#include <cmath>

#include "pbg2p/random.hpp"
#include "pbg2p/tensor.hpp"

namespace pbg2p {

// Exact (erf) GELU and its derivative.
template <class T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <class T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * M_2_SQRTPI * M_SQRT1_2);
  return cdf + x * pdf;
}

// Inverted dropout: scale 1/(1-p) where kept, 0 where dropped.
template <class T>
Matrix<T> dropout_keep(Rng& rng, Eigen::Index rows, Eigen::Index cols, double p) {
  Matrix<T> keep(rows, cols);
  const T scale = T(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < keep.size(); ++i) {
    keep.data()[i] = rng.uniform01() < p ? T(0) : scale;
  }
  return keep;
}

}  // namespace pbg2p
