#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "smf/cli/run_config.hpp"
#include "smf/data/types.hpp"
#include "smf/eval/unpaired.hpp"
#include "smf/model/checkpoint.hpp"

namespace smf::cli {

// Binary P6, 8 bits per channel, values scaled by 255 and rounded.
void write_ppm(const std::filesystem::path& path, int width, int height, const std::vector<float>& rgb);
struct PpmImage {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;
};
PpmImage read_ppm(const std::filesystem::path& path);

// File names inside a data directory.
inline constexpr const char* kTrainDatasetFile = "train.smfd";
inline constexpr const char* kEvalDatasetFile = "eval.smfd";
inline constexpr const char* kEvalPairingFile = "eval_pairs.smfp";

// Names inside a run directory.
inline constexpr const char* kCheckpointFile = "checkpoint.smfc";
inline constexpr const char* kTrainLogFile = "train_log.csv";
inline constexpr const char* kTrainLogHeader = "step,fm_loss,attn_loss,total_loss,grad_norm";

std::string dataset_summary(const data::Dataset& dataset);

struct TrainIo {
  std::filesystem::path run_dir;        // empty: no log or checkpoint files
  std::optional<model::Checkpoint> resume;
  std::ostream* progress = nullptr;     // one line per log row
};

// Trains to cfg.steps total steps. Appends one CSV row per log_every steps
// (window means) and rewrites the checkpoint every checkpoint_every steps
// and at the end. Checkpoints are written via rename, so a failed run
// leaves the last good one in place.
model::Checkpoint train_model(const data::Dataset& dataset, const RunConfig& cfg, const TrainIo& io);

// Commands. Each returns the process exit code and throws UsageError for
// bad input; other exceptions are runtime failures.
int cmd_datagen(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& out);
int cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir,
              const std::optional<std::filesystem::path>& resume, std::ostream& out);
int cmd_sample(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir,
               std::ostream& out);
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir,
             std::ostream& out);
int cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& out);
int cmd_gradcheck(std::ostream& out, const std::string& fault_op = {});

struct AblationRow {
  std::string variant;
  bool use_ref_pos_emb = false;
  bool use_attn_loss = false;
  eval::EvalReport report;
};
// baseline, +ref-pos-emb, +ref-pos-emb+attn-loss
std::vector<RunConfig> ablation_variants(const RunConfig& cfg);
std::string ablation_table(const std::vector<AblationRow>& rows);
inline constexpr const char* kAblationHeader =
    "variant,use_ref_pos_emb,use_attn_loss,ssim_mean,frechet,accuracy_kind,accuracy_color,accuracy_pattern,"
    "accuracy_fit,accuracy_overall,attention_mass_ratio_mean";

// Reads the files datagen writes into data_dir; a missing file is a usage
// error pointing at datagen.
struct EvalData {
  data::Dataset dataset;
  data::PairingList pairing;
};
EvalData load_eval_data(const RunConfig& cfg);
data::Dataset load_train_data(const RunConfig& cfg);

eval::EvalConfig eval_config(const RunConfig& cfg);

}  // namespace smf::cli
