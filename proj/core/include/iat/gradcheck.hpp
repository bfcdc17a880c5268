#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace iat {

struct GradCheckResult {
  std::string op;
  double worst_rel_err = 0.0;
  bool pass = false;
};

// |analytic - numeric| / max(1, |analytic|, |numeric|).
double gradcheck_relative_error(double analytic, double numeric);

// Central finite-difference check (h = 1e-3) of every differentiable
// primitive and every composite loss, on tiny randomized shapes drawn from
// the seed. Inputs are sampled away from relu/|.|/margin kinks so the
// difference quotient is meaningful. One result per case, worst relative
// error across all checked coordinates.
//
// perturb_op, when non-empty, multiplies the analytic gradient of the named
// case by 1.05 before comparison — a sensitivity hook proving the harness
// flags a wrong gradient (that case must come back failing).
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, double tol = 1e-3,
                                                 const std::string& perturb_op = "");

}  // namespace iat
