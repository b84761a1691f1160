#include "pbg2p/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "pbg2p/random.hpp"

namespace pbg2p {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 40;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_len = 16;
  c.dropout = 0.1;
  c.seed = 3;
  return c;
}

GradcheckCase make_gradcheck_case(std::uint64_t seed) {
  auto config = tiny_config();
  config.seed = seed;
  GradcheckCase c{init_random<double>(config), {}, {true, seed * 7919 + 1}};
  // Larger, less regular values than the init so every path carries signal.
  Rng rng{seed, 0x6C};
  c.params.for_each([&](std::string_view, Matrix<double>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += rng.normal(0.0, 0.2);
  });
  const auto v = static_cast<std::uint64_t>(config.vocab_size);
  std::vector<TrainingExample> examples;
  for (std::size_t len : {9u, 6u}) {
    TrainingExample e;
    e.input_ids.push_back(special::kCls);
    for (std::size_t i = 0; i < len; ++i) {
      e.input_ids.push_back(static_cast<TokenId>(special::kCount + rng.uniform_index(v - special::kCount)));
    }
    e.input_ids.push_back(special::kSep);
    for (std::size_t p = 1; p <= len; p += 2) {
      e.target_positions.push_back(p);
      e.target_ids.push_back(static_cast<TokenId>(special::kCount + rng.uniform_index(v - special::kCount)));
    }
    examples.push_back(std::move(e));
  }
  c.batch = make_mlm_batch(examples);
  return c;
}

double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                      double floor) {
  const double den = std::max({analytic.norm(), numeric.norm(), floor});
  return (analytic - numeric).norm() / den;
}

namespace {

template <class T>
GradcheckReport compare(const Parameters<double>& point, const Parameters<T>& analytic,
                        const MlmBatch& batch, const ForwardOptions& options, double step) {
  GradcheckReport report;
  // Differences are taken in extended precision so their round-off stays far
  // below the tolerance; a gradient norm under sqrt(eps) of the loss counts as
  // zero at the analytic precision.
  Parameters<long double> probe = point.cast<long double>();
  const double loss = static_cast<double>(mlm_gradients<long double>(probe, batch, options, nullptr));
  const double floor = std::sqrt(std::numeric_limits<T>::epsilon()) * std::max(1.0, std::abs(loss));
  std::vector<Matrix<long double>*> slots;
  probe.for_each([&](std::string_view, Matrix<long double>& m) { slots.push_back(&m); });
  std::size_t k = 0;
  analytic.for_each([&](std::string_view name, const Matrix<T>& g) {
    Matrix<long double>& m = *slots[k++];
    TensorCheck tc{std::string(name), static_cast<std::size_t>(m.size()), 0.0, 0.0};
    Eigen::VectorXd a_vec(m.size()), n_vec(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const long double x = m.data()[i];
      const long double h = step;
      auto f = [&](long double offset) {
        m.data()[i] = x + offset;
        return mlm_gradients<long double>(probe, batch, options, nullptr);
      };
      const auto numeric = static_cast<double>(
          (8.0L * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12.0L * h));
      m.data()[i] = x;
      const double a = static_cast<double>(g.data()[i]);
      tc.max_abs_error = std::max(tc.max_abs_error, std::abs(a - numeric));
      a_vec[i] = a;
      n_vec[i] = numeric;
    }
    tc.rel_error = relative_error(a_vec, n_vec, floor);
    report.max_rel_error = std::max(report.max_rel_error, tc.rel_error);
    report.tensors.push_back(std::move(tc));
  });
  return report;
}

}  // namespace

GradcheckReport gradcheck_64(const GradcheckCase& c, double step) {
  auto grads = Parameters<double>::zeros(c.params.config);
  mlm_gradients<double>(c.params, c.batch, c.options, &grads);
  auto report = compare<double>(c.params, grads, c.batch, c.options, step);
  report.precision = "64-bit";
  report.tolerance = 1e-6;
  return report;
}

GradcheckReport gradcheck_32(const GradcheckCase& c, double step) {
  const auto p32 = c.params.cast<float>();
  auto grads = Parameters<float>::zeros(p32.config);
  mlm_gradients<float>(p32, c.batch, c.options, &grads);
  auto report = compare<float>(p32.cast<double>(), grads, c.batch, c.options, step);
  report.precision = "32-bit";
  report.tolerance = 1e-3;
  return report;
}

std::string format_report(const GradcheckReport& report) {
  std::string out;
  char buf[256];
  for (const auto& t : report.tensors) {
    std::snprintf(buf, sizeof buf, "  %-34s %6zu  max abs %.3e  rel %.3e\n", t.name.c_str(),
                  t.entries, t.max_abs_error, t.rel_error);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%s: max relative error %.3e (tolerance %.0e) %s\n",
                report.precision.c_str(), report.max_rel_error, report.tolerance,
                report.passed() ? "PASS" : "FAIL");
  out += buf;
  return out;
}

}  // namespace pbg2p
