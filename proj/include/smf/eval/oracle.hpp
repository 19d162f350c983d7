#pragma once

#include "smf/data/types.hpp"

// Reads garment attributes back off a person image by probing body regions
// of the known pose.
namespace smf::eval {

inline constexpr double kConfidenceThreshold = 0.5;

struct AttributeGuess {
  data::GarmentSpec spec;
  // In [0, 1]. All zero when no garment colour is found on the torso.
  double kind_confidence = 0.0;
  double color_confidence = 0.0;
  double pattern_confidence = 0.0;
  double fit_confidence = 0.0;
};

AttributeGuess attribute_oracle(const data::Image& img, const data::PoseSpec& pose);

}  // namespace smf::eval
