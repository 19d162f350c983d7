#pragma once

#include <string>
#include <vector>

namespace smf::ad {

struct OpCheckReport {
  std::string op;
  double worst_rel_error = 0.0;
  int worst_seed = 0;
  bool passed = false;
};

inline constexpr double kOpCheckTolerance = 1e-4;

// Gradient checks for every registered op on randomized shapes, one run per
// seed in [0, seeds). A non-empty `fault_op` corrupts that op's backward rule.
std::vector<OpCheckReport> run_op_grad_checks(int seeds = 10, const std::string& fault_op = {});

}  // namespace smf::ad
