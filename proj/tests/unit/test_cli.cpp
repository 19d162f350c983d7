#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "smf/cli/commands.hpp"
#include "smf/cli/run_config.hpp"
#include "smf/data/dataset.hpp"

using namespace smf;
using namespace smf::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("smf_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunConfig tiny(const fs::path& data_dir) {
  RunConfig c;
  c.model.d_model = 16;
  c.model.blocks = 1;
  c.model.heads = 2;
  c.data_dir = data_dir.string();
  c.dataset_size = 24;
  c.eval_size = 6;
  c.batch_size = 4;
  c.steps = 20;
  c.log_every = 5;
  c.checkpoint_every = 10;
  c.sampler_steps = 3;
  c.eval_batch = 4;
  return c;
}

std::vector<std::vector<double>> csv_rows(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> r;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) r.push_back(std::stod(cell));
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST_CASE("config text round-trips and defaults are stable") {
  RunConfig c;
  c.lambda_attn = 0.25;
  c.lr = 3e-4;
  c.model.use_ref_pos_emb = false;
  c.prompt = "wear this red dress";
  c.data_dir = "some/dir";
  CHECK(parse_run_config(to_text(c)) == c);
  CHECK(parse_run_config("") == RunConfig{});
  CHECK(RunConfig{}.batch_size == 16);
  CHECK(RunConfig{}.sampler_steps == 25);
  CHECK(RunConfig{}.lambda_attn == 0.1);
  CHECK(run_config_keys().size() == 27);
}

TEST_CASE("config parsing handles comments and whitespace") {
  const auto c = parse_run_config("# header\n\n  steps = 12   # trailing\nuse_attn_loss=false\nlr = 1e-4\n");
  CHECK(c.steps == 12);
  CHECK_FALSE(c.model.use_attn_loss);
  CHECK(c.lr == 1e-4);
}

TEST_CASE("config parsing rejects bad input with the line number") {
  const auto message = [](const std::string& text) {
    try {
      parse_run_config(text, "cfg");
    } catch (const UsageError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("steps = 1\nlearning_rate = 2\n").find("cfg:2: unknown key \"learning_rate\"") != std::string::npos);
  CHECK(message("steps = 1\nsteps = 2\n").find("duplicate") != std::string::npos);
  CHECK(message("steps 1\n").find("expected key = value") != std::string::npos);
  CHECK(message("steps = ten\n").find("cfg:1") != std::string::npos);
  CHECK(message("use_pose = maybe\n").find("true or false") != std::string::npos);
  CHECK(message("batch_size = -3\n") != "no error");
}

TEST_CASE("validation rejects out-of-range values") {
  const auto bad = [](auto edit) {
    RunConfig c;
    edit(c);
    CHECK_THROWS_AS(validate(c), UsageError);
  };
  bad([](RunConfig& c) { c.model.heads = 3; });
  bad([](RunConfig& c) { c.lambda_attn = -0.1; });
  bad([](RunConfig& c) { c.lr = 0; });
  bad([](RunConfig& c) { c.batch_size = 0; });
  bad([](RunConfig& c) { c.dataset_size = 0; });
  bad([](RunConfig& c) { c.sampler_steps = 0; });
  bad([](RunConfig& c) { c.prompt = "wear this glittery top"; });
  CHECK_NOTHROW(validate(RunConfig{}));
}

TEST_CASE("out-of-vocabulary prompts list the vocabulary") {
  RunConfig c;
  c.prompt = "wear this glittery top";
  try {
    validate(c);
    FAIL("expected an error");
  } catch (const UsageError& e) {
    const std::string m = e.what();
    CHECK(m.find("glittery") != std::string::npos);
    CHECK(m.find("vocabulary: wear this red") != std::string::npos);
    CHECK(m.find("tucked in") != std::string::npos);
  }
}

TEST_CASE("datagen is reproducible and summarizes the data") {
  TempDir a("datagen_a"), b("datagen_b");
  RunConfig c;
  c.dataset_size = 500;
  c.dataset_seed = 7;
  c.eval_size = 10;
  std::ostringstream out;
  CHECK(cmd_datagen(c, a.path, out) == 0);
  CHECK(cmd_datagen(c, b.path, out) == 0);
  for (const char* f : {kTrainDatasetFile, kEvalDatasetFile, kEvalPairingFile}) {
    CHECK(slurp(a.path / f) == slurp(b.path / f));
  }
  const auto summary = dataset_summary(data::read_dataset(a.path / kTrainDatasetFile));
  for (const char* kind : {"tshirt", "longsleeve", "dress"}) {
    const auto pos = summary.find(std::string("kind ") + kind + " ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stoi(summary.substr(pos + 6 + std::string(kind).size())) > 0);
  }
}

TEST_CASE("datagen with no triplets is a usage error and writes nothing") {
  TempDir d("datagen_zero");
  RunConfig c;
  c.dataset_size = 0;
  std::ostringstream out;
  CHECK_THROWS_AS(cmd_datagen(c, d.path / "out", out), UsageError);
  CHECK_FALSE(fs::exists(d.path / "out"));
}

TEST_CASE("commands need datagen output") {
  TempDir d("missing");
  auto c = tiny(d.path / "nothing");
  std::ostringstream out;
  CHECK_THROWS_AS(cmd_train(c, d.path / "run", std::nullopt, out), UsageError);
}

TEST_CASE("train logs, checkpoints and resumes to identical parameters") {
  TempDir d("train");
  auto c = tiny(d.path / "data");
  std::ostringstream out;
  cmd_datagen(c, c.data_dir, out);

  CHECK(cmd_train(c, d.path / "full", std::nullopt, out) == 0);
  const auto full = model::load_checkpoint(d.path / "full" / kCheckpointFile);
  CHECK(full.step == 20);
  const auto log = slurp(d.path / "full" / kTrainLogFile);
  CHECK(log.rfind(kTrainLogHeader, 0) == 0);
  const auto rows = csv_rows(log);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0][0] == 5);
  CHECK(rows[3][0] == 20);
  for (const auto& r : rows) CHECK(r[3] == doctest::Approx(r[1] + c.lambda_attn * r[2]).epsilon(1e-5));

  // Stop at 10, then resume to 20.
  auto half = c;
  half.steps = 10;
  cmd_train(half, d.path / "split", std::nullopt, out);
  const auto mid = d.path / "mid.smfc";
  fs::copy_file(d.path / "split" / kCheckpointFile, mid);
  cmd_train(c, d.path / "split", mid, out);
  const auto resumed = model::load_checkpoint(d.path / "split" / kCheckpointFile);
  CHECK(resumed.step == 20);
  CHECK(model::serialize_checkpoint(resumed) == model::serialize_checkpoint(full));
  CHECK(slurp(d.path / "split" / kTrainLogFile) == log);

  auto other = c;
  other.lr = 5e-3;
  CHECK_THROWS_AS(cmd_train(other, d.path / "bad", mid, out), UsageError);
}

TEST_CASE("the attention column is zero when the loss is off") {
  TempDir d("noattn");
  auto c = tiny(d.path / "data");
  c.model.use_attn_loss = false;
  c.steps = 10;
  std::ostringstream out;
  cmd_datagen(c, c.data_dir, out);
  cmd_train(c, d.path / "run", std::nullopt, out);
  const auto rows = csv_rows(slurp(d.path / "run" / kTrainLogFile));
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r[2] == 0.0);
    CHECK(r[3] == r[1]);
  }
}

TEST_CASE("training on the default model lowers the total loss within 200 steps") {
  RunConfig c;
  c.steps = 200;
  c.log_every = 1;
  const auto ds = data::build_dataset(c.dataset_size, c.dataset_seed);
  std::ostringstream progress;
  TrainIo io;
  io.progress = &progress;
  train_model(ds, c, io);
  const auto rows = csv_rows(std::string(kTrainLogHeader) + "\n" + progress.str());
  REQUIRE(rows.size() == 200);
  double trailing = 0;
  for (std::size_t i = 150; i < 200; ++i) trailing += rows[i][3];
  trailing /= 50;
  CHECK(trailing < rows[0][3]);
}

TEST_CASE("sample writes reproducible images") {
  TempDir d("sample");
  auto c = tiny(d.path / "data");
  std::ostringstream out;
  cmd_datagen(c, c.data_dir, out);
  cmd_train(c, d.path / "run", std::nullopt, out);
  const auto ckpt = d.path / "run" / kCheckpointFile;
  CHECK(cmd_sample(c, ckpt, d.path / "a", out) == 0);
  CHECK(cmd_sample(c, ckpt, d.path / "b", out) == 0);
  CHECK(slurp(d.path / "a" / "grid.ppm") == slurp(d.path / "b" / "grid.ppm"));
  const auto grid = read_ppm(d.path / "a" / "grid.ppm");
  CHECK(grid.width == 96);
  CHECK(grid.height == 32);
  const auto single = read_ppm(d.path / "a" / "sample.ppm");
  CHECK(single.width == 32);
  CHECK(single.height == 32);
  CHECK(slurp(d.path / "a" / "sample.ppm").rfind("P6\n32 32\n255\n", 0) == 0);

  auto toggled = c;
  toggled.prompt = "wear this red solid short-sleeved tshirt tucked in";
  CHECK(cmd_sample(toggled, ckpt, d.path / "c", out) == 0);
  auto oov = c;
  oov.prompt = "wear this sparkly tshirt";
  CHECK_THROWS_AS(cmd_sample(oov, ckpt, d.path / "e", out), UsageError);
  auto far = c;
  far.sample_person = 6;
  CHECK_THROWS_AS(cmd_sample(far, ckpt, d.path / "e", out), UsageError);
  auto wrong = c;
  wrong.model.d_model = 32;
  CHECK_THROWS_AS(cmd_sample(wrong, ckpt, d.path / "e", out), UsageError);
}

TEST_CASE("ppm round trip") {
  TempDir d("ppm");
  std::vector<float> rgb{0.0f, 0.5f, 1.0f, 0.2f, 0.4f, 0.6f};
  write_ppm(d.path / "x.ppm", 2, 1, rgb);
  const auto img = read_ppm(d.path / "x.ppm");
  REQUIRE(img.rgb.size() == rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) CHECK(img.rgb[i] == doctest::Approx(rgb[i]).epsilon(1.0 / 255));
  CHECK_THROWS(write_ppm(d.path / "y.ppm", 2, 2, rgb));
}

TEST_CASE("eval reports and the ablation table are reproducible") {
  TempDir d("ablate");
  auto c = tiny(d.path / "data");
  c.steps = 6;
  std::ostringstream out;
  cmd_datagen(c, c.data_dir, out);
  cmd_train(c, d.path / "run", std::nullopt, out);
  const auto ckpt = d.path / "run" / kCheckpointFile;
  cmd_eval(c, ckpt, d.path / "e1", out);
  cmd_eval(c, ckpt, d.path / "e2", out);
  CHECK(slurp(d.path / "e1" / "eval_report.txt") == slurp(d.path / "e2" / "eval_report.txt"));
  CHECK(slurp(d.path / "e1" / "eval_pairs.csv") == slurp(d.path / "e2" / "eval_pairs.csv"));
  CHECK(slurp(d.path / "e1" / "eval_report.txt").find("n_samples = 6") != std::string::npos);

  cmd_ablate(c, d.path / "ab1", out);
  cmd_ablate(c, d.path / "ab2", out);
  const auto table = slurp(d.path / "ab1" / "ablation.csv");
  CHECK(table == slurp(d.path / "ab2" / "ablation.csv"));
  std::istringstream in(table);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == kAblationHeader);
  CHECK(lines[1].rfind("baseline,false,false,", 0) == 0);
  CHECK(lines[2].rfind("+ref-pos-emb,true,false,", 0) == 0);
  CHECK(lines[3].rfind("+ref-pos-emb+attn-loss,true,true,", 0) == 0);
  // A rerun in the same directory reuses the finished runs.
  cmd_ablate(c, d.path / "ab1", out);
  CHECK(slurp(d.path / "ab1" / "ablation.csv") == table);
}

TEST_CASE("gradcheck names a corrupted op") {
  std::ostringstream out;
  CHECK(cmd_gradcheck(out, "softmax") != 0);
  const auto text = out.str();
  CHECK(text.find("FAIL softmax") != std::string::npos);
  CHECK(text.find("PASS matmul") != std::string::npos);
  CHECK(text.find("gradcheck FAILED") != std::string::npos);
}
