#pragma once

#include <cstdint>
#include <string>

#include "smf/model/config.hpp"

namespace smf::flow {

inline constexpr double kModelCheckTolerance = 1e-3;

struct ModelCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

// d_model 8, one block, two heads.
model::ModelConfig reduced_config();

// Central differences on every parameter of the reduced model, for the full
// training objective (flow matching plus attention term) on one triplet.
ModelCheckReport run_model_grad_check(std::uint64_t seed = 19);

}  // namespace smf::flow
