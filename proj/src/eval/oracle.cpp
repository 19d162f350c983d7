#include "smf/eval/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "smf/data/constants.hpp"
#include "smf/data/render.hpp"

namespace smf::eval {
namespace {

namespace g = data::geometry;
using data::Rgb;

double dist2(const data::Image& img, int x, int y, const Rgb& c) {
  const Rgb p = img.rgb(x, y);
  double s = 0;
  for (std::size_t k = 0; k < 3; ++k) s += (p[k] - c[k]) * (p[k] - c[k]);
  return s;
}

double nearest(const data::Image& img, int x, int y, const std::vector<Rgb>& set) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : set) best = std::min(best, dist2(img, x, y, c));
  return best;
}

struct Probe {
  const data::Image& img;
  const data::PartMap& parts;
  std::vector<Rgb> fabric;  // garment colour, plus white when striped

  // Fraction of pixels in the region closer to the fabric than to `other`.
  template <typename Pred>
  double fabric_fraction(Pred in_region, const std::vector<Rgb>& other) const {
    int hit = 0, n = 0;
    for (int y = 0; y < data::kImageSize; ++y) {
      for (int x = 0; x < data::kImageSize; ++x) {
        if (!in_region(x, y, parts[data::pixel_index(x, y)])) continue;
        ++n;
        if (nearest(img, x, y, fabric) < nearest(img, x, y, other)) ++hit;
      }
    }
    return n == 0 ? 0.0 : static_cast<double>(hit) / n;
  }
};

double margin(double fraction) { return std::min(1.0, std::abs(2.0 * fraction - 1.0)); }

bool upper_torso(int, int y, data::Part p) { return p == data::Part::kTorso && y < g::kWaistlineY; }

}  // namespace

AttributeGuess attribute_oracle(const data::Image& img, const data::PoseSpec& pose) {
  const auto parts = data::body_parts(pose);
  AttributeGuess guess;
  const std::vector<Rgb> skins(data::kSkinTones.begin(), data::kSkinTones.end());
  std::vector<Rgb> backdrop(data::kBackgroundTints.begin(), data::kBackgroundTints.end());
  backdrop.push_back(data::kPants);

  // Colour: vote among the palette against every other scene colour.
  std::vector<Rgb> non_palette = skins;
  non_palette.insert(non_palette.end(), backdrop.begin(), backdrop.end());
  non_palette.push_back(data::kWaistline);
  std::array<int, data::kPalette.size()> votes{};
  int non_white = 0;
  for (int y = g::kTorsoY0; y < g::kWaistlineY; ++y) {
    for (int x = g::kTorsoX0; x < g::kTorsoX1; ++x) {
      if (!upper_torso(x, y, parts[data::pixel_index(x, y)])) continue;
      const double dw = dist2(img, x, y, data::kWhite);
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < data::kPalette.size(); ++k) {
        const double d = dist2(img, x, y, data::kPalette[k]);
        if (d < bd) {
          bd = d;
          best = k;
        }
      }
      if (dw <= bd) continue;
      ++non_white;
      if (bd < nearest(img, x, y, non_palette)) ++votes[best];
    }
  }
  const auto winner = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  guess.spec.color = static_cast<int>(winner);
  if (votes[winner] == 0) return guess;
  guess.color_confidence = static_cast<double>(votes[winner]) / non_white;
  const Rgb color = data::kPalette[winner];

  // Pattern: white share of stripe-phase rows minus that of the other rows.
  double stripe_rows = 0, plain_rows = 0;
  int n_stripe = 0, n_plain = 0;
  for (int y = g::kTorsoY0; y < g::kWaistlineY; ++y) {
    int white = 0, n = 0;
    for (int x = g::kTorsoX0; x < g::kTorsoX1; ++x) {
      if (!upper_torso(x, y, parts[data::pixel_index(x, y)])) continue;
      ++n;
      if (dist2(img, x, y, data::kWhite) < dist2(img, x, y, color)) ++white;
    }
    if (n == 0) continue;
    const double share = static_cast<double>(white) / n;
    if ((y / g::kStripeWidth) % 2 != 0) {
      stripe_rows += share;
      ++n_stripe;
    } else {
      plain_rows += share;
      ++n_plain;
    }
  }
  const double stripe_score =
      (n_stripe ? stripe_rows / n_stripe : 0.0) - (n_plain ? plain_rows / n_plain : 0.0);
  guess.spec.pattern = stripe_score > 0.5 ? data::Pattern::kStripes : data::Pattern::kSolid;
  guess.pattern_confidence = margin(std::clamp(stripe_score, 0.0, 1.0));

  Probe probe{img, parts, {color}};
  if (guess.spec.pattern == data::Pattern::kStripes) probe.fabric.push_back(data::kWhite);

  // Kind: skirt band below the hips, then sleeve length.
  const double skirt = probe.fabric_fraction(
      [](int x, int y, data::Part p) {
        return y >= g::kSkirtY0 && y < g::kSkirtY1 && x >= g::kTorsoX0 && x < g::kTorsoX1 &&
               p != data::Part::kUpperArm && p != data::Part::kLowerArm;
      },
      backdrop);
  const double lower = probe.fabric_fraction([](int, int, data::Part p) { return p == data::Part::kLowerArm; }, skins);
  if (skirt > 0.5) {
    guess.spec.kind = data::GarmentKind::kDress;
    guess.kind_confidence = margin(skirt);
  } else {
    guess.spec.kind = lower > 0.5 ? data::GarmentKind::kLongsleeve : data::GarmentKind::kTshirt;
    guess.kind_confidence = std::min(margin(skirt), margin(lower));
  }

  // Fit: fabric or pants and waistline on the hip rows.
  if (guess.spec.kind == data::GarmentKind::kDress) {
    guess.spec.fit = data::Fit::kRegular;
    guess.fit_confidence = guess.kind_confidence;
  } else {
    const double hip = probe.fabric_fraction([](int, int, data::Part p) { return p == data::Part::kHip; },
                                             {data::kPants, data::kWaistline});
    guess.spec.fit = hip > 0.5 ? data::Fit::kRegular : data::Fit::kTucked;
    guess.fit_confidence = margin(hip);
  }

  const double presence = guess.color_confidence;
  guess.kind_confidence = std::min(guess.kind_confidence, presence);
  guess.pattern_confidence = std::min(guess.pattern_confidence, presence);
  guess.fit_confidence = std::min(guess.fit_confidence, presence);
  return guess;
}

}  // namespace smf::eval
