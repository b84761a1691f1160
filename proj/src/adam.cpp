#include "pbg2p/adam.hpp"

#include <cmath>

#include "pbg2p/errors.hpp"

namespace pbg2p {

template <class T>
void Adam<T>::step(std::span<Matrix<T>* const> params, std::span<const Matrix<T>* const> grads,
                   std::span<const std::string> names) {
  if (params.size() != grads.size()) throw ConfigError("Adam: parameter and gradient counts differ");
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
    }
  }
  if (m_.size() != params.size()) throw ConfigError("Adam: tensor count changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = i < names.size() ? names[i] : "#" + std::to_string(i);
    if (params[i]->rows() != m_[i].rows() || params[i]->cols() != m_[i].cols() ||
        grads[i]->rows() != m_[i].rows() || grads[i]->cols() != m_[i].cols()) {
      throw ConfigError("Adam: shape mismatch for tensor " + name);
    }
    if (!grads[i]->allFinite()) {
      throw NumericError("non-finite gradient in tensor " + name + " at step " +
                         std::to_string(steps_ + 1));
    }
  }

  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->data();
    const T* g = grads[i]->data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    for (Eigen::Index k = 0; k < params[i]->size(); ++k) {
      const double gk = g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = config_.learning_rate * (mk / c1) / (std::sqrt(vk / c2) + config_.epsilon);
      p[k] = static_cast<T>(p[k] - update);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace pbg2p
