#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "smf/data/types.hpp"
#include "smf/util/rng.hpp"

namespace smf::data {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kPairingVersion = 1;

GarmentSpec sample_garment(Rng& rng);
PoseSpec sample_pose(Rng& rng);

// Fully determined by the seed; source_spec != target_spec.
Triplet make_triplet(std::uint64_t seed);
// Item i uses seed ^ i.
Dataset build_dataset(std::size_t n, std::uint64_t seed);

std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(std::span<const std::uint8_t> bytes, const std::string& context = "dataset");
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

// Every canonical garment: 2 top kinds x 6 colors x 2 patterns x 2 fits, then
// 6 x 2 dresses.
inline constexpr int kAttributeGridSize = 60;
GarmentSpec attribute_grid_spec(int index);

// A garment index with this bit set refers to the attribute grid rather than
// another dataset record.
inline constexpr std::uint32_t kGridGarmentFlag = 0x80000000u;

struct Pair {
  std::uint32_t person = 0;
  std::uint32_t garment = 0;
  bool from_grid() const { return (garment & kGridGarmentFlag) != 0; }
  std::uint32_t garment_index() const { return garment & ~kGridGarmentFlag; }
  bool operator==(const Pair&) const = default;
};

struct PairingList {
  std::uint64_t seed = 0;
  std::vector<Pair> pairs;
  bool operator==(const PairingList&) const = default;
};

// One pair per person record. The garment comes from another record whose
// target garment differs from what the person wears; for a single-record
// dataset it is drawn from the attribute grid instead.
PairingList build_pairing_list(const Dataset& dataset, std::uint64_t seed);
GarmentSpec paired_garment_spec(const Dataset& dataset, const Pair& pair);
Image paired_garment_image(const Dataset& dataset, const Pair& pair);
// Throws std::invalid_argument describing the first violating pair.
void validate_pairing(const Dataset& dataset, const PairingList& list);

std::vector<std::uint8_t> serialize_pairing(const PairingList& list);
PairingList parse_pairing(std::span<const std::uint8_t> bytes, const std::string& context = "pairing list");
void write_pairing(const std::filesystem::path& path, const PairingList& list);
PairingList read_pairing(const std::filesystem::path& path);

}  // namespace smf::data
