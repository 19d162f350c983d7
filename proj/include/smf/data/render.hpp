#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "smf/data/types.hpp"

namespace smf::data {

// Topmost body part at each pixel, before any garment is drawn.
enum class Part : std::uint8_t {
  kBackground = 0,
  kHead,
  kNeck,
  kTorso,
  kHip,  // torso rows below the natural waist; pants when uncovered
  kLeg,
  kUpperArm,
  kLowerArm,
};

using PartMap = std::vector<Part>;  // kImageSize * kImageSize, row-major

struct Rendering {
  Image image;
  PartMap parts;
  std::vector<std::uint8_t> garment;  // 1 where the garment is the visible layer
};

inline std::size_t pixel_index(int x, int y) { return static_cast<std::size_t>(y * kImageSize + x); }

// Body layout for a pose; depends on nothing else.
PartMap body_parts(const PoseSpec& pose);

Rgb skin_tone(std::uint64_t identity_seed);
Rgb background_tint(std::uint64_t identity_seed);
// Garment fill color on row y (stripes alternate every 2 rows, starting with the palette color).
Rgb garment_color(const GarmentSpec& garment, int y);

Rendering render_person_layers(const PoseSpec& pose, const GarmentSpec& garment, std::uint64_t identity_seed);
Image render_person(const PoseSpec& pose, const GarmentSpec& garment, std::uint64_t identity_seed);
// Flat garment on white in the rest layout. Fit is never visible here.
Image render_catalog(const GarmentSpec& garment);
Mask garment_mask(const PoseSpec& pose, const GarmentSpec& garment);
Mask max_pool_mask(const std::vector<std::uint8_t>& pixel_mask);

// Binary P6 PPM, values clamped to [0, 1].
void write_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace smf::data
