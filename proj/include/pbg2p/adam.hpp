#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pbg2p/tensor.hpp"

namespace pbg2p {

struct AdamConfig {
  double learning_rate = 5e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moments are created on the first step with the
// shapes of the tensors passed in and must keep those shapes afterwards.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  // Throws NumericError naming the tensor if any gradient is not finite; no
  // parameter is touched in that case.
  void step(std::span<Matrix<T>* const> params, std::span<const Matrix<T>* const> grads,
            std::span<const std::string> names = {});

  std::uint64_t steps() const noexcept { return steps_; }
  const std::vector<Matrix<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Matrix<T>>& second_moments() const noexcept { return v_; }

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

}  // namespace pbg2p
