#pragma once

#include <array>
#include <cstddef>
#include <string_view>

// Frozen constants of the toy try-on world. Renderer geometry, palettes and
// the vocabulary table are pinned by regression tests; changing any value
// here changes every generated dataset.
namespace smf::data {

inline constexpr int kImageSize = 32;
inline constexpr int kChannels = 3;
inline constexpr int kPatchSize = 4;
inline constexpr int kGridSize = kImageSize / kPatchSize;  // 8
inline constexpr int kGridCells = kGridSize * kGridSize;   // 64

using Rgb = std::array<float, 3>;

// Garment palette, indexed by GarmentSpec::color.
inline constexpr std::array<Rgb, 6> kPalette{{
    {0.85f, 0.15f, 0.15f},  // red
    {0.15f, 0.60f, 0.25f},  // green
    {0.15f, 0.30f, 0.85f},  // blue
    {0.95f, 0.80f, 0.10f},  // yellow
    {0.55f, 0.20f, 0.70f},  // purple
    {0.95f, 0.50f, 0.10f},  // orange
}};
inline constexpr std::array<std::string_view, 6> kColorNames{"red", "green", "blue", "yellow", "purple", "orange"};

inline constexpr Rgb kWhite{1.0f, 1.0f, 1.0f};
inline constexpr Rgb kPants{0.22f, 0.25f, 0.35f};
inline constexpr Rgb kWaistline{0.08f, 0.08f, 0.08f};

// Identity palettes, selected from the identity seed.
inline constexpr std::array<Rgb, 4> kSkinTones{{
    {0.96f, 0.80f, 0.69f},
    {0.88f, 0.68f, 0.54f},
    {0.72f, 0.52f, 0.38f},
    {0.52f, 0.37f, 0.27f},
}};
inline constexpr std::array<Rgb, 4> kBackgroundTints{{
    {0.93f, 0.93f, 0.93f},
    {0.90f, 0.93f, 0.97f},
    {0.97f, 0.94f, 0.89f},
    {0.92f, 0.96f, 0.91f},
}};

// Body geometry in pixel units; a pixel (x, y) is sampled at its center
// (x + 0.5, y + 0.5). Rectangles are half-open [lo, hi).
namespace geometry {
inline constexpr float kHeadCenterX = 16.0f;
inline constexpr float kHeadCenterY = 4.5f;
inline constexpr float kHeadRadius = 3.6f;
inline constexpr int kNeckX0 = 14, kNeckX1 = 18, kNeckY = 8;

inline constexpr int kTorsoX0 = 10, kTorsoX1 = 22;
inline constexpr int kTorsoY0 = 9, kTorsoY1 = 20;  // rows 9..19
inline constexpr int kHipY0 = 17;                  // body rows 17..19 show pants
inline constexpr int kTuckShortening = 3;          // tucked hem moves up 3 rows
inline constexpr int kWaistlineY = kTorsoY1 - kTuckShortening;  // row 17

inline constexpr float kShoulderLeftX = 10.5f, kShoulderRightX = 21.5f, kShoulderY = 10.5f;
inline constexpr float kArmLength = 11.0f;
inline constexpr float kUpperArmLength = 4.5f;  // short sleeves cover this much
inline constexpr float kArmRadius = 1.0f;
// Rest abduction added to the pose's arm angle (radians, positive = outward).
inline constexpr float kArmRestAngle = 0.35f;

inline constexpr float kHipLeftX = 13.0f, kHipRightX = 19.0f, kHipY = 19.5f;
inline constexpr float kLegLength = 12.0f;
inline constexpr float kLegRadius = 1.25f;

// Dress skirt: rows 20..26, widening by kSkirtFlare px per row on each side.
inline constexpr int kSkirtY0 = 20, kSkirtY1 = 27;
inline constexpr float kSkirtFlare = 0.7f;

inline constexpr int kStripeWidth = 2;  // alternating palette / white bands
}  // namespace geometry

// Pose ranges (radians).
inline constexpr float kArmAngleLimit = 1.0471975511965976f;  // pi / 3
inline constexpr float kLegSpreadLimit = 0.39269908169872414f;  // pi / 8

// Prompt vocabulary; the index is the token id. Id 0 pads short prompts.
inline constexpr std::array<std::string_view, 32> kVocabulary{
    "<pad>",        "wear",        "this",      "red",    "green",  "blue",   "yellow", "purple",
    "orange",       "solid",       "striped",   "short-sleeved", "long-sleeved", "sleeveless", "tshirt", "top",
    "dress",        "tucked",      "in",        "a",      "the",    "with",   "and",    "please",
    "try",          "on",          "loose",     "untucked", "shirt", "white", "black",  "plain",
};
inline constexpr int kPadToken = 0;
inline constexpr int kMaxPromptLength = 12;

}  // namespace smf::data
