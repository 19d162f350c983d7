#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smf/data/dataset.hpp"
#include "smf/eval/oracle.hpp"
#include "smf/model/dit.hpp"

namespace smf::eval {

struct EvalConfig {
  int sampler_steps = 25;
  std::uint64_t seed = 0;    // see pair_seed
  std::size_t batch = 16;    // requests sampled together
};

struct PairRecord {
  std::uint32_t person = 0;
  std::uint32_t garment = 0;  // raw pairing entry (grid flag preserved)
  data::GarmentSpec truth;
  data::GarmentSpec predicted;
  double ssim = 0.0;
  double mass_ratio = 0.0;
  bool kind_ok = false, color_ok = false, pattern_ok = false, fit_ok = false;
};

struct EvalReport {
  double ssim_mean = 0.0;
  double frechet = 0.0;
  double acc_kind = 0.0, acc_color = 0.0, acc_pattern = 0.0, acc_fit = 0.0, acc_overall = 0.0;
  double attention_mass_ratio_mean = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t pairing_seed = 0;
  std::vector<PairRecord> pairs;
};

// What the pair asks for: person i's pose and identity, garment j, and the
// true render of that combination.
struct PairTask {
  data::PoseSpec pose;
  std::uint64_t identity = 0;
  data::GarmentSpec garment;
  data::Image catalog;
  std::vector<int> prompt;
  data::Image truth;
  data::Mask mask;  // diagnostic only: scores attention, never fed to the generator
};

// Noise seed for one pair; depends on the pair itself, not its list position,
// so reordering a pairing list reorders the samples.
std::uint64_t pair_seed(std::uint64_t seed, const data::Pair& pair);

PairTask pair_task(const data::Dataset& dataset, const data::Pair& pair);

// Scores given outputs (one image and attention record per pair, in pairing
// order). An empty attention record scores a mass ratio of 0.
EvalReport score_pairs(const data::Dataset& dataset, const data::PairingList& pairing,
                       const std::vector<data::Image>& generated,
                       const std::vector<model::AttentionRecord>& attention);

// Samples every pair with the model, then scores.
EvalReport run_unpaired_eval(const model::Params<float>& params, const model::ModelConfig& cfg,
                             const data::Dataset& dataset, const data::PairingList& pairing, const EvalConfig& cfg_eval);

// key = value lines, fixed order and formatting.
std::string report_text(const EvalReport& report);
// Header plus one row per pair.
std::string report_csv(const EvalReport& report);
inline constexpr const char* kReportCsvHeader =
    "index,person,garment,truth,predicted,ssim,mass_ratio,kind_ok,color_ok,pattern_ok,fit_ok";

}  // namespace smf::eval
