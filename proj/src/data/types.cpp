#include "smf/data/types.hpp"

#include <cmath>
#include <stdexcept>

namespace smf::data {

void validate(const GarmentSpec& spec) {
  if (static_cast<int>(spec.kind) >= kNumKinds) throw std::invalid_argument("garment kind out of range");
  if (spec.color < 0 || spec.color >= kNumColors) {
    throw std::invalid_argument("garment color index " + std::to_string(spec.color) + " out of range");
  }
  if (static_cast<int>(spec.pattern) > 1) throw std::invalid_argument("garment pattern out of range");
  if (static_cast<int>(spec.fit) > 1) throw std::invalid_argument("garment fit out of range");
}

GarmentSpec canonical(GarmentSpec spec) {
  if (spec.kind == GarmentKind::kDress) spec.fit = Fit::kRegular;
  return spec;
}

std::string describe(const GarmentSpec& spec) {
  static constexpr const char* kinds[] = {"tshirt", "longsleeve", "dress"};
  std::string s = kinds[static_cast<int>(spec.kind) % 3];
  s += "/";
  s += spec.color >= 0 && spec.color < kNumColors ? std::string(kColorNames[static_cast<std::size_t>(spec.color)])
                                                  : std::to_string(spec.color);
  s += spec.pattern == Pattern::kStripes ? "/stripes" : "/solid";
  s += spec.fit == Fit::kTucked ? "/tucked" : "/regular";
  return s;
}

void validate(const PoseSpec& pose) {
  auto check = [](float v, float lo, float hi, const char* name) {
    if (!std::isfinite(v) || v < lo || v > hi) {
      throw std::invalid_argument(std::string(name) + " = " + std::to_string(v) + " outside [" + std::to_string(lo) +
                                  ", " + std::to_string(hi) + "]");
    }
  };
  check(pose.left_arm, -kArmAngleLimit, kArmAngleLimit, "left_arm");
  check(pose.right_arm, -kArmAngleLimit, kArmAngleLimit, "right_arm");
  check(pose.leg_spread, 0.0f, kLegSpreadLimit, "leg_spread");
}

}  // namespace smf::data
