#include "smf/data/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "smf/util/rng.hpp"

namespace smf::data {
namespace {

namespace g = geometry;

struct Segment {
  double ax, ay, dx, dy, length, radius;

  // Distance along the segment of the closest point, or a negative value if
  // the pixel center lies outside the capsule.
  double hit(int x, int y) const {
    const double px = x + 0.5 - ax, py = y + 0.5 - ay;
    const double s = std::clamp(px * dx + py * dy, 0.0, length);
    const double ex = px - s * dx, ey = py - s * dy;
    return ex * ex + ey * ey <= radius * radius ? s : -1.0;
  }
};

Segment arm(bool left, float angle) {
  const double a = static_cast<double>(g::kArmRestAngle) + static_cast<double>(angle);
  const double side = left ? -1.0 : 1.0;
  return {left ? g::kShoulderLeftX : g::kShoulderRightX, g::kShoulderY, side * std::sin(a), std::cos(a), g::kArmLength,
          g::kArmRadius};
}

Segment leg(bool left, float spread) {
  const double side = left ? -1.0 : 1.0;
  return {left ? g::kHipLeftX : g::kHipRightX, g::kHipY, side * std::sin(static_cast<double>(spread)),
          std::cos(static_cast<double>(spread)), g::kLegLength, g::kLegRadius};
}

bool in_head(int x, int y) {
  const double dx = x + 0.5 - g::kHeadCenterX, dy = y + 0.5 - g::kHeadCenterY;
  return dx * dx + dy * dy <= static_cast<double>(g::kHeadRadius) * g::kHeadRadius;
}

bool in_torso(int x, int y) { return x >= g::kTorsoX0 && x < g::kTorsoX1 && y >= g::kTorsoY0 && y < g::kTorsoY1; }

bool in_skirt(int x, int y) {
  if (y < g::kSkirtY0 || y >= g::kSkirtY1) return false;
  const double flare = g::kSkirtFlare * (y - (g::kTorsoY1 - 1));
  const double cx = x + 0.5;
  return cx >= g::kTorsoX0 - flare && cx < g::kTorsoX1 + flare;
}

enum class Cover { kNone, kFabric, kWaistline };

// Garment body layer (everything except sleeves).
Cover body_cover(const GarmentSpec& garment, int x, int y) {
  if (garment.kind == GarmentKind::kDress) return in_torso(x, y) || in_skirt(x, y) ? Cover::kFabric : Cover::kNone;
  if (!in_torso(x, y)) return Cover::kNone;
  if (garment.fit == Fit::kTucked) {
    if (y < g::kWaistlineY) return Cover::kFabric;
    return y == g::kWaistlineY ? Cover::kWaistline : Cover::kNone;
  }
  return Cover::kFabric;
}

bool sleeve_covers(const GarmentSpec& garment, Part part) {
  switch (garment.kind) {
    case GarmentKind::kTshirt:
      return part == Part::kUpperArm;
    case GarmentKind::kLongsleeve:
      return part == Part::kUpperArm || part == Part::kLowerArm;
    case GarmentKind::kDress:
      return false;
  }
  return false;
}

bool is_arm(Part p) { return p == Part::kUpperArm || p == Part::kLowerArm; }

}  // namespace

PartMap body_parts(const PoseSpec& pose) {
  validate(pose);
  PartMap parts(kImageSize * kImageSize, Part::kBackground);
  const Segment legs[2] = {leg(true, pose.leg_spread), leg(false, pose.leg_spread)};
  const Segment arms[2] = {arm(true, pose.left_arm), arm(false, pose.right_arm)};
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      Part p = Part::kBackground;
      if (legs[0].hit(x, y) >= 0.0 || legs[1].hit(x, y) >= 0.0) p = Part::kLeg;
      if (in_torso(x, y)) p = y >= g::kHipY0 ? Part::kHip : Part::kTorso;
      if (in_head(x, y)) p = Part::kHead;
      if (y == g::kNeckY && x >= g::kNeckX0 && x < g::kNeckX1) p = Part::kNeck;
      for (const auto& a : arms) {
        const double s = a.hit(x, y);
        if (s >= 0.0) p = s <= g::kUpperArmLength ? Part::kUpperArm : Part::kLowerArm;
      }
      parts[pixel_index(x, y)] = p;
    }
  }
  return parts;
}

Rgb skin_tone(std::uint64_t identity_seed) { return kSkinTones[splitmix64(identity_seed) % kSkinTones.size()]; }

Rgb background_tint(std::uint64_t identity_seed) {
  return kBackgroundTints[(splitmix64(identity_seed) >> 8) % kBackgroundTints.size()];
}

Rgb garment_color(const GarmentSpec& garment, int y) {
  if (garment.pattern == Pattern::kStripes && (y / g::kStripeWidth) % 2 != 0) return kWhite;
  return kPalette[static_cast<std::size_t>(garment.color)];
}

Rendering render_person_layers(const PoseSpec& pose, const GarmentSpec& spec, std::uint64_t identity_seed) {
  validate(spec);
  const GarmentSpec garment = canonical(spec);
  Rendering r;
  r.parts = body_parts(pose);
  r.garment.assign(r.parts.size(), 0);
  const Rgb skin = skin_tone(identity_seed);
  const Rgb bg = background_tint(identity_seed);
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      const auto i = pixel_index(x, y);
      const Part p = r.parts[i];
      Rgb c = bg;
      switch (p) {
        case Part::kBackground:
          break;
        case Part::kHip:
        case Part::kLeg:
          c = kPants;
          break;
        default:
          c = skin;
      }
      // Arms are drawn in front of the garment body.
      const Cover cover = is_arm(p) ? (sleeve_covers(garment, p) ? Cover::kFabric : Cover::kNone)
                                    : body_cover(garment, x, y);
      if (cover != Cover::kNone) {
        c = cover == Cover::kWaistline ? kWaistline : garment_color(garment, y);
        r.garment[i] = 1;
      }
      r.image.set(x, y, c);
    }
  }
  return r;
}

Image render_person(const PoseSpec& pose, const GarmentSpec& garment, std::uint64_t identity_seed) {
  return render_person_layers(pose, garment, identity_seed).image;
}

Image render_catalog(const GarmentSpec& spec) {
  validate(spec);
  GarmentSpec garment = canonical(spec);
  garment.fit = Fit::kRegular;
  const PartMap rest = body_parts(PoseSpec{});
  Image img;
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      const Part p = rest[pixel_index(x, y)];
      const bool covered = body_cover(garment, x, y) != Cover::kNone || (is_arm(p) && sleeve_covers(garment, p));
      img.set(x, y, covered ? garment_color(garment, y) : kWhite);
    }
  }
  return img;
}

Mask max_pool_mask(const std::vector<std::uint8_t>& pixel_mask) {
  if (pixel_mask.size() != static_cast<std::size_t>(kImageSize * kImageSize)) {
    throw std::invalid_argument("max_pool_mask: expected " + std::to_string(kImageSize * kImageSize) + " pixels");
  }
  Mask m{};
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      if (pixel_mask[pixel_index(x, y)]) m[static_cast<std::size_t>((y / kPatchSize) * kGridSize + x / kPatchSize)] = 1;
    }
  }
  return m;
}

Mask garment_mask(const PoseSpec& pose, const GarmentSpec& garment) {
  return max_pool_mask(render_person_layers(pose, garment, 0).garment);
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "P6\n" << kImageSize << " " << kImageSize << "\n255\n";
  for (float v : image.pixels) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
  if (!out) throw std::runtime_error(path.string() + ": write error");
}

}  // namespace smf::data
