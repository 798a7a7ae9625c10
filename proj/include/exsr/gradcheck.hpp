#pragma once

#include <string>
#include <vector>

#include "exsr/tensor.hpp"

namespace exsr {

// Every operation exposing a reverse-mode closure. The check suite must
// cover each name; a test enforces the correspondence so an op added here
// without a registered case fails CI.
const std::vector<std::string>& differentiable_op_names();

// One finite-difference case: inputs plus a runner that returns the output
// and a vjp producing one cotangent per input. Double precision throughout.
struct CheckSetup {
  std::vector<TensorD> inputs;
  std::function<DiffOutT<double>(const std::vector<TensorD>&)> op;
};

// Contract a random cotangent with the vjp and compare against the central
// finite difference of <u, f(x)> along a random direction, per input.
// Returns max over inputs of |analytic - numeric| / max(|a|, |n|, 1e-8).
// Step 1e-5.
double directional_check(const CheckSetup& setup, std::uint64_t seed);

struct GradCheckCase {
  std::string op;
  double tol;  // pass threshold
  std::function<double(std::uint64_t)> max_rel_err;
};

const std::vector<GradCheckCase>& gradcheck_cases();

struct GradCheckRow {
  std::string op;
  double rel_err = 0;
  double tol = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  bool all_pass = true;
};

// Run the whole suite, or one op by name. Unknown names throw ParamError
// listing the available ops. tol_override <= 0 keeps per-case defaults.
GradCheckReport run_gradcheck(const std::string& op_filter, double tol_override,
                              std::uint64_t seed);

// Total objective (charbonnier + 0.1 * correlation) gradient on the toy
// model versus finite differences at `probes` random parameter coordinates.
double model_end_to_end_check(std::uint64_t seed, int probes = 20);

}  // namespace exsr
