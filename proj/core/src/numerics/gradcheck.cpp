#include "couple/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace couple::numerics {

namespace {

double evaluate(const ScalarGraph& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.constant(p));
  return f(tape, leaves).value().item();
}

}  // namespace

GradCheckReport finite_diff_report(const ScalarGraph& f, std::span<const Tensor> params,
                                   double step) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  GradCheckReport report;

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
    const Var loss = f(tape, leaves);
    if (!std::isfinite(loss.value().item())) {
      report.max_rel_error = kInf;
      return report;
    }
    const Gradients grads = backward(tape, loss);
    for (const Var& v : leaves) analytic.push_back(grads.of(v));
  }

  std::vector<Tensor> work(params.begin(), params.end());
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double x0 = work[p][i];
      work[p][i] = x0 + step;
      const double up = evaluate(f, work);
      work[p][i] = x0 - step;
      const double down = evaluate(f, work);
      work[p][i] = x0;
      const double a = analytic[p][i];
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(a)) {
        report.max_rel_error = kInf;
        report.worst_param = p;
        report.worst_entry = i;
        return report;
      }
      const double n = (up - down) / (2.0 * step);
      const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
      if (err > report.max_rel_error) {
        report = {err, p, i, a, n};
      }
    }
  }
  return report;
}

double finite_diff_check(const ScalarGraph& f, std::span<const Tensor> params, double step) {
  return finite_diff_report(f, params, step).max_rel_error;
}

}  // namespace couple::numerics
