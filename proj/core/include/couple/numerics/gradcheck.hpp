#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "couple/numerics/tape.hpp"

namespace couple::numerics {

// Builds a scalar on the given tape from leaf handles, one per parameter.
// Must be deterministic: any randomness has to be frozen by the caller.
using ScalarGraph = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares backward() against central differences (f(x+h) - f(x-h)) / 2h for
// every parameter entry; relative error is |a-n| / max(|a|, |n|, 1e-8).
// A non-finite evaluation yields +inf.
GradCheckReport finite_diff_report(const ScalarGraph& f, std::span<const Tensor> params,
                                   double step);

double finite_diff_check(const ScalarGraph& f, std::span<const Tensor> params, double step);

}  // namespace couple::numerics
