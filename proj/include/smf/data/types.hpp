#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "smf/data/constants.hpp"

namespace smf::data {

enum class GarmentKind : std::uint8_t { kTshirt = 0, kLongsleeve = 1, kDress = 2 };
enum class Pattern : std::uint8_t { kSolid = 0, kStripes = 1 };
enum class Fit : std::uint8_t { kRegular = 0, kTucked = 1 };

inline constexpr int kNumKinds = 3;
inline constexpr int kNumColors = 6;

struct GarmentSpec {
  GarmentKind kind = GarmentKind::kTshirt;
  int color = 0;  // index into kPalette
  Pattern pattern = Pattern::kSolid;
  Fit fit = Fit::kRegular;  // ignored for dresses, which are always stored as regular

  bool operator==(const GarmentSpec&) const = default;
};

// Throws std::invalid_argument on out-of-range fields.
void validate(const GarmentSpec& spec);
// Dresses have no fit variant; collapses them to Fit::kRegular.
GarmentSpec canonical(GarmentSpec spec);
std::string describe(const GarmentSpec& spec);

struct PoseSpec {
  float left_arm = 0.0f;   // [-pi/3, pi/3], positive lifts the arm away from the body
  float right_arm = 0.0f;  // [-pi/3, pi/3]
  float leg_spread = 0.0f; // [0, pi/8]

  bool operator==(const PoseSpec&) const = default;
};

void validate(const PoseSpec& pose);

// 32x32 RGB image, row-major, interleaved channels, values in [0, 1].
struct Image {
  std::vector<float> pixels = std::vector<float>(kImageSize * kImageSize * kChannels, 0.0f);

  float& at(int x, int y, int c) { return pixels[static_cast<std::size_t>((y * kImageSize + x) * kChannels + c)]; }
  float at(int x, int y, int c) const {
    return pixels[static_cast<std::size_t>((y * kImageSize + x) * kChannels + c)];
  }
  Rgb rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set(int x, int y, const Rgb& c) {
    for (int k = 0; k < kChannels; ++k) at(x, y, k) = c[static_cast<std::size_t>(k)];
  }
  bool operator==(const Image&) const = default;
};

// Binary garment indicator on the patch grid, row-major kGridSize x kGridSize.
using Mask = std::array<std::uint8_t, kGridCells>;

struct Triplet {
  Image person;   // source identity wearing source_spec
  Image garment;  // catalog image of target_spec
  Image target;   // same identity and pose wearing target_spec
  Mask mask{};    // target garment coverage on the patch grid
  std::vector<int> prompt;
  PoseSpec pose;
  std::uint64_t identity = 0;
  GarmentSpec source_spec;
  GarmentSpec target_spec;

  bool operator==(const Triplet&) const = default;
};

using Dataset = std::vector<Triplet>;

}  // namespace smf::data
