#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "smf/autodiff/adam.hpp"
#include "smf/model/dit.hpp"

namespace smf::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::uint64_t step = 0;   // completed training steps
  std::string run_config;   // key = value snapshot of the producing run
  Params<float> params;
  ad::AdamState adam;       // moments are stored as "adam.m.<name>" / "adam.v.<name>" entries
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes, const std::string& context = "checkpoint");
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace smf::model
