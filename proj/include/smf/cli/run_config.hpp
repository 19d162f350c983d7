#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "smf/model/config.hpp"

namespace smf::cli {

// Bad input from the user: flags, config files, indices. Exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  model::ModelConfig model;

  // training
  double lambda_attn = 0.1;
  double lr = 1e-3;
  double clip_norm = 1.0;
  std::size_t batch_size = 16;
  std::int64_t steps = 5000;
  std::uint64_t seed = 0;  // parameter init, batch order and noise
  std::int64_t log_every = 100;
  std::int64_t checkpoint_every = 1000;

  // data
  std::string data_dir = "data";
  std::size_t dataset_size = 500;
  std::uint64_t dataset_seed = 7;
  std::size_t eval_size = 100;
  std::uint64_t eval_dataset_seed = 20240607;
  std::uint64_t pairing_seed = 1;

  // sampling and evaluation
  int sampler_steps = 25;
  std::uint64_t sample_seed = 0;
  std::size_t sample_person = 0;
  std::size_t sample_garment = 1;
  std::string prompt;  // empty: the garment record's own prompt
  std::uint64_t eval_seed = 0;
  std::size_t eval_batch = 16;

  bool operator==(const RunConfig&) const = default;
};

// `key = value` lines; `#` starts a comment. Unknown or repeated keys and
// malformed values throw UsageError naming the line.
RunConfig parse_run_config(std::string_view text, const std::string& context = "config");
RunConfig load_run_config(const std::filesystem::path& path);

// Throws UsageError on the first invalid field.
void validate(const RunConfig& cfg);

// Every key in a fixed order; parse_run_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);

std::vector<std::string> run_config_keys();

}  // namespace smf::cli
