#pragma once

#include <cstddef>
#include <span>

#include "pbg2p/tensor.hpp"
#include "pbg2p/vocab.hpp"

namespace pbg2p {

template <class T>
struct LossResult {
  T loss;
  Matrix<T> logit_grad;  // same shape as the logits, zero outside target rows
};

// Mean over targets of -log softmax(logits.row(row))[id]. Rows not listed in
// target_rows receive an exactly zero gradient. Throws ConfigError on an
// empty target set and RangeError on out-of-range rows or ids.
template <class T>
LossResult<T> mlm_loss(const Matrix<T>& logits, std::span<const std::size_t> target_rows,
                       std::span<const TokenId> target_ids);

// Row-wise softmax computed in double.
Matrix<double> softmax_rows(const Matrix<double>& logits);

}  // namespace pbg2p
