#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pbg2p/model.hpp"
#include "pbg2p/training.hpp"

namespace pbg2p {

// V=40, d=16, one layer, two heads, d_ff=32, max_len=16.
ModelConfig tiny_config();

// Perturbed parameters and a padded two-sentence batch with dropout enabled
// under a fixed mask seed, so the loss is a smooth deterministic function.
struct GradcheckCase {
  Parameters<double> params;
  MlmBatch batch;
  ForwardOptions options;
};
GradcheckCase make_gradcheck_case(std::uint64_t seed = 1);

struct TensorCheck {
  std::string name;
  std::size_t entries = 0;
  double max_abs_error = 0.0;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
};

struct GradcheckReport {
  std::string precision;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  std::vector<TensorCheck> tensors;
  bool passed() const { return max_rel_error <= tolerance; }
};

// Norm-wise relative error of one tensor's gradient. Entries whose true
// gradient is near zero would make an entry-wise ratio meaningless; floor
// covers tensors whose gradient vanishes altogether (the checks use
// sqrt(eps) of the analytic precision times max(1, |loss|)).
double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                      double floor = 1e-8);

// Analytic gradients against 5-point central differences of the loss taken in
// long double. The 32-bit check runs the analytic pass in float on the rounded
// parameters and differentiates at those same values.
GradcheckReport gradcheck_64(const GradcheckCase& c, double step = 2.5e-4);
GradcheckReport gradcheck_32(const GradcheckCase& c, double step = 2.5e-4);

std::string format_report(const GradcheckReport& report);

}  // namespace pbg2p
