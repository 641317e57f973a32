#include "lcg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lcg {

namespace {

double evaluate(const LossBuilder& loss, std::span<const Tensor> point) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : point) leaves.push_back(tape.leaf(t, false));
  return loss(tape, leaves).value().item();
}

}  // namespace

GradientReport check_gradient(const LossBuilder& loss, std::span<const Tensor> point,
                              const GradientCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("check_gradient: epsilon must be > 0");
  GradientReport report;

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& t : point) leaves.push_back(tape.leaf(t, true));
    Var out = loss(tape, leaves);
    tape.backward(out);
    for (const Var& v : leaves) analytic.push_back(tape.grad(v));
  }

  std::vector<Tensor> probe(point.begin(), point.end());
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const std::size_t n = probe[k].size();
    std::size_t stride = 1;
    if (options.max_coords_per_tensor > 0 && n > options.max_coords_per_tensor) {
      stride = (n + options.max_coords_per_tensor - 1) / options.max_coords_per_tensor;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = probe[k][i];
      auto at = [&](double offset) {
        probe[k][i] = saved + offset;
        const double f = evaluate(loss, probe);
        probe[k][i] = saved;
        return f;
      };
      const double h = options.epsilon;
      double numeric = (at(h) - at(-h)) / (2.0 * h);
      if (options.fourth_order) {
        numeric = (4.0 * numeric - (at(2 * h) - at(-2 * h)) / (4.0 * h)) / 3.0;
      }
      const double a = analytic[k][i];
      ++report.checked;
      if (!std::isfinite(a) || !std::isfinite(numeric)) {
        report.ok = false;
        report.worst_tensor = k;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
        report.failure = "non-finite gradient at tensor " + std::to_string(k) + " index " +
                         std::to_string(i);
        return report;
      }
      const double abs_err = std::abs(a - numeric);
      const double denom =
          std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      const double rel_err = abs_err / denom;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err >= report.max_rel_error) {
        report.max_rel_error = rel_err;
        report.worst_tensor = k;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  if (report.max_rel_error > options.tolerance) {
    report.ok = false;
    std::ostringstream os;
    os << "relative error " << report.max_rel_error << " exceeds " << options.tolerance
       << " at tensor " << report.worst_tensor << " index " << report.worst_index;
    report.failure = os.str();
  }
  return report;
}

GradientReport check_gradient(const std::function<Var(Tape&, Var)>& loss, const Tensor& point,
                              double epsilon, double tolerance) {
  GradientCheckOptions options;
  options.epsilon = epsilon;
  options.tolerance = tolerance;
  LossBuilder wrapped = [&loss](Tape& tape, std::span<const Var> leaves) {
    return loss(tape, leaves[0]);
  };
  return check_gradient(wrapped, std::span<const Tensor>(&point, 1), options);
}

std::string describe(const GradientReport& report) {
  std::ostringstream os;
  os << (report.ok ? "ok" : "FAILED") << " checked=" << report.checked
     << " max_abs=" << report.max_abs_error << " max_rel=" << report.max_rel_error;
  if (!report.ok) os << " (" << report.failure << ")";
  return os.str();
}

}  // namespace lcg
