#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "smf/cli/commands.hpp"
#include "smf/cli/run_config.hpp"

extern "C" void openblas_set_num_threads(int num_threads);

namespace {

using smf::cli::UsageError;

int thread_count() {
  const char* env = std::getenv("SMF_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) throw UsageError(std::string("SMF_THREADS must be a positive integer, got ") + env);
  return static_cast<int>(n);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mask-free virtual try-on on a procedural toy world"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::optional<std::string> prompt;
  std::string out;
  std::string checkpoint;

  const auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "output directory");
  };

  auto* datagen = app.add_subcommand("datagen", "write training and held-out datasets plus the pairing list");
  common(datagen);
  datagen->add_option("--seed", seed, "training dataset seed");

  auto* train = app.add_subcommand("train", "train a model; --checkpoint resumes");
  common(train);
  train->add_option("--seed", seed, "training seed");
  train->add_option("--steps", steps, "total training steps");
  train->add_option("--checkpoint", checkpoint, "checkpoint to resume from");

  auto* sample = app.add_subcommand("sample", "generate one try-on image and a person|garment|result grid");
  common(sample);
  sample->add_option("--seed", seed, "noise seed");
  sample->add_option("--steps", steps, "sampler steps");
  sample->add_option("--prompt", prompt, "replaces the garment's prompt");
  sample->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();

  auto* eval = app.add_subcommand("eval", "unpaired evaluation on the held-out pairing list");
  common(eval);
  eval->add_option("--seed", seed, "noise seed");
  eval->add_option("--steps", steps, "sampler steps");
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();

  auto* ablate = app.add_subcommand("ablate", "train and evaluate the three ablation variants");
  common(ablate);
  ablate->add_option("--seed", seed, "training seed");
  ablate->add_option("--steps", steps, "training steps per variant");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of every op and the reduced model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    openblas_set_num_threads(thread_count());
    if (gradcheck->parsed()) return smf::cli::cmd_gradcheck(std::cout);

    auto cfg = config_path.empty() ? smf::cli::RunConfig{} : smf::cli::load_run_config(config_path);
    if (datagen->parsed()) {
      if (seed) cfg.dataset_seed = *seed;
      return smf::cli::cmd_datagen(cfg, out.empty() ? cfg.data_dir : out, std::cout);
    }
    if (train->parsed() || ablate->parsed()) {
      if (seed) cfg.seed = *seed;
      if (steps) cfg.steps = *steps;
      if (train->parsed()) {
        std::optional<std::filesystem::path> resume;
        if (!checkpoint.empty()) resume = checkpoint;
        return smf::cli::cmd_train(cfg, out.empty() ? "runs/train" : out, resume, std::cout);
      }
      return smf::cli::cmd_ablate(cfg, out.empty() ? "runs/ablate" : out, std::cout);
    }
    if (steps) {
      if (*steps < 1 || *steps > 100000) throw UsageError("--steps must be in [1, 100000]");
      cfg.sampler_steps = static_cast<int>(*steps);
    }
    if (sample->parsed()) {
      if (seed) cfg.sample_seed = *seed;
      if (prompt) cfg.prompt = *prompt;
      return smf::cli::cmd_sample(cfg, checkpoint, out.empty() ? "runs/sample" : out, std::cout);
    }
    if (seed) cfg.eval_seed = *seed;
    return smf::cli::cmd_eval(cfg, checkpoint, out.empty() ? "runs/eval" : out, std::cout);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
