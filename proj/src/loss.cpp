#include "pbg2p/loss.hpp"

#include <cmath>
#include <string>

#include "pbg2p/errors.hpp"

namespace pbg2p {

template <class T>
LossResult<T> mlm_loss(const Matrix<T>& logits, std::span<const std::size_t> target_rows,
                       std::span<const TokenId> target_ids) {
  if (target_rows.empty()) throw ConfigError("mlm_loss needs at least one target");
  if (target_rows.size() != target_ids.size()) {
    throw ConfigError("target rows and ids differ in length");
  }
  LossResult<T> out{T(0), Matrix<T>::Zero(logits.rows(), logits.cols())};
  const T inv_n = T(1) / static_cast<T>(target_rows.size());
  for (std::size_t i = 0; i < target_rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(target_rows[i]);
    const auto id = static_cast<Eigen::Index>(target_ids[i]);
    if (r < 0 || r >= logits.rows()) throw RangeError("target row " + std::to_string(r) + " out of range");
    if (id < 0 || id >= logits.cols()) throw RangeError("target id " + std::to_string(id) + " out of range");
    const T m = logits.row(r).maxCoeff();
    const auto shifted = (logits.row(r).array() - m).exp();
    const T z = shifted.sum();
    out.loss += (std::log(z) - (logits(r, id) - m)) * inv_n;
    out.logit_grad.row(r).array() += shifted * (inv_n / z);
    out.logit_grad(r, id) -= inv_n;
  }
  return out;
}

Matrix<double> softmax_rows(const Matrix<double>& logits) {
  Matrix<double> p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - m).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

template LossResult<float> mlm_loss(const Matrix<float>&, std::span<const std::size_t>,
                                    std::span<const TokenId>);
template LossResult<double> mlm_loss(const Matrix<double>&, std::span<const std::size_t>,
                                     std::span<const TokenId>);
template LossResult<long double> mlm_loss(const Matrix<long double>&, std::span<const std::size_t>,
                                          std::span<const TokenId>);

}  // namespace pbg2p
