#include "smf/cli/commands.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "smf/autodiff/op_checks.hpp"
#include "smf/data/dataset.hpp"
#include "smf/data/prompt.hpp"
#include "smf/flow/model_check.hpp"
#include "smf/flow/sampler.hpp"
#include "smf/flow/train.hpp"

namespace smf::cli {
namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << text;
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

fs::path data_file(const RunConfig& cfg, const char* name) {
  const auto p = fs::path(cfg.data_dir) / name;
  if (!fs::exists(p)) throw UsageError(p.string() + " not found; run datagen first");
  return p;
}

flow::TrainOptions train_options(const RunConfig& cfg) {
  flow::TrainOptions o;
  o.lambda_attn = cfg.lambda_attn;
  o.lr = cfg.lr;
  o.clip_norm = cfg.clip_norm;
  o.seed = cfg.seed;
  return o;
}

// Fields that change what a training step computes.
bool same_training(const RunConfig& a, const RunConfig& b) {
  return a.model == b.model && a.lambda_attn == b.lambda_attn && a.lr == b.lr && a.clip_norm == b.clip_norm &&
         a.batch_size == b.batch_size && a.seed == b.seed;
}

void save_checkpoint_atomic(const fs::path& path, const model::Checkpoint& c) {
  const auto tmp = fs::path(path.string() + ".tmp");
  model::save_checkpoint(tmp, c);
  fs::rename(tmp, path);
}

model::Checkpoint load_checkpoint_for(const RunConfig& cfg, const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("checkpoint " + path.string() + " not found");
  auto c = model::load_checkpoint(path);
  if (c.config != cfg.model) {
    throw UsageError("checkpoint " + path.string() + " was trained with a different model config");
  }
  return c;
}

// Keeps the header and rows with step <= last_step.
std::string trimmed_log(const fs::path& path, std::uint64_t last_step) {
  std::string out = std::string(kTrainLogHeader) + "\n";
  std::ifstream f(path);
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoull(line.substr(0, line.find(','))) <= last_step) out += line + "\n";
  }
  return out;
}

std::string vocabulary_list() {
  std::string v;
  for (std::size_t i = 1; i < data::kVocabulary.size(); ++i) {
    if (i > 1) v += ' ';
    v += data::kVocabulary[i];
  }
  return v;
}

}  // namespace

void write_ppm(const fs::path& path, int width, int height, const std::vector<float>& rgb) {
  if (width <= 0 || height <= 0 || rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw std::invalid_argument("write_ppm: " + std::to_string(rgb.size()) + " values for " + std::to_string(width) +
                                "x" + std::to_string(height));
  }
  std::string bytes = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (float v : rgb) {
    const float c = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
  write_text(path, bytes);
}

PpmImage read_ppm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::string magic;
  int maxval = 0;
  PpmImage img;
  f >> magic >> img.width >> img.height >> maxval;
  if (!f || magic != "P6" || img.width <= 0 || img.height <= 0 || maxval != 255) {
    throw std::runtime_error(path.string() + ": not an 8-bit P6 image");
  }
  f.get();
  std::vector<unsigned char> raw(static_cast<std::size_t>(img.width) * img.height * 3);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size())) throw std::runtime_error(path.string() + ": truncated");
  img.rgb.reserve(raw.size());
  for (auto b : raw) img.rgb.push_back(b / 255.0f);
  return img;
}

std::string dataset_summary(const data::Dataset& ds) {
  static constexpr std::array<const char*, 3> kinds{"tshirt", "longsleeve", "dress"};
  std::array<int, 3> kind{};
  std::array<int, data::kNumColors> color{};
  std::array<int, 2> pattern{}, fit{};
  for (const auto& t : ds) {
    ++kind[static_cast<std::size_t>(t.target_spec.kind)];
    ++color[static_cast<std::size_t>(t.target_spec.color)];
    ++pattern[static_cast<std::size_t>(t.target_spec.pattern)];
    ++fit[static_cast<std::size_t>(t.target_spec.fit)];
  }
  std::ostringstream os;
  os << "triplets " << ds.size() << "\n";
  for (std::size_t k = 0; k < kinds.size(); ++k) os << "kind " << kinds[k] << " " << kind[k] << "\n";
  for (std::size_t c = 0; c < color.size(); ++c) os << "color " << data::kColorNames[c] << " " << color[c] << "\n";
  os << "pattern solid " << pattern[0] << "\npattern stripes " << pattern[1] << "\n";
  os << "fit regular " << fit[0] << "\nfit tucked " << fit[1] << "\n";
  return os.str();
}

data::Dataset load_train_data(const RunConfig& cfg) { return data::read_dataset(data_file(cfg, kTrainDatasetFile)); }

EvalData load_eval_data(const RunConfig& cfg) {
  EvalData d;
  d.dataset = data::read_dataset(data_file(cfg, kEvalDatasetFile));
  d.pairing = data::read_pairing(data_file(cfg, kEvalPairingFile));
  data::validate_pairing(d.dataset, d.pairing);
  return d;
}

eval::EvalConfig eval_config(const RunConfig& cfg) {
  eval::EvalConfig e;
  e.sampler_steps = cfg.sampler_steps;
  e.seed = cfg.eval_seed;
  e.batch = cfg.eval_batch;
  return e;
}

model::Checkpoint train_model(const data::Dataset& ds, const RunConfig& cfg, const TrainIo& io) {
  validate(cfg);
  if (cfg.batch_size > ds.size()) {
    throw UsageError("batch_size " + std::to_string(cfg.batch_size) + " exceeds dataset size " +
                     std::to_string(ds.size()));
  }
  const auto opts = train_options(cfg);
  flow::TrainState st;
  if (io.resume) {
    const auto& r = *io.resume;
    const auto saved = parse_run_config(r.run_config, "checkpoint config");
    if (!same_training(saved, cfg)) throw UsageError("cannot resume: checkpoint was trained with different settings");
    st.params = r.params;
    st.adam = r.adam;
    st.adam.options.lr = cfg.lr;
    st.step = r.step;
  } else {
    st = flow::init_train_state(cfg.model, cfg.seed, opts);
  }

  const bool files = !io.run_dir.empty();
  const auto ckpt_path = io.run_dir / kCheckpointFile;
  const auto log_path = io.run_dir / kTrainLogFile;
  std::ofstream log;
  if (files) {
    make_dir(io.run_dir);
    const auto head = io.resume && fs::exists(log_path) ? trimmed_log(log_path, st.step)
                                                        : std::string(kTrainLogHeader) + "\n";
    write_text(log_path, head);
    log.open(log_path, std::ios::app);
  }
  const auto snapshot = [&] {
    model::Checkpoint c;
    c.config = cfg.model;
    c.step = st.step;
    c.run_config = to_text(cfg);
    c.params = st.params;
    c.adam = st.adam;
    return c;
  };

  double fm = 0, attn = 0, total = 0, gn = 0;
  int window = 0;
  const auto target = static_cast<std::uint64_t>(cfg.steps);
  while (st.step < target) {
    const auto idx = flow::batch_indices(ds.size(), cfg.batch_size, cfg.seed, st.step);
    std::vector<const data::Triplet*> batch;
    for (auto i : idx) batch.push_back(&ds[i]);
    flow::TrainStepReport r;
    try {
      r = flow::train_step(batch, st, cfg.model, opts);
    } catch (const std::exception& e) {
      std::string msg = e.what();
      if (files && fs::exists(ckpt_path)) msg += "; last good checkpoint kept at " + ckpt_path.string();
      throw std::runtime_error(msg);
    }
    fm += r.fm_loss;
    attn += r.attn_loss;
    total += r.total_loss;
    gn += r.grad_norm;
    ++window;
    if (r.step % static_cast<std::uint64_t>(cfg.log_every) == 0) {
      const std::string row = std::to_string(r.step) + "," + fixed(fm / window) + "," + fixed(attn / window) + "," +
                              fixed(total / window) + "," + fixed(gn / window);
      if (files) log << row << "\n" << std::flush;
      if (io.progress) *io.progress << row << "\n" << std::flush;
      fm = attn = total = gn = 0;
      window = 0;
    }
    if (files && r.step % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0) {
      save_checkpoint_atomic(ckpt_path, snapshot());
    }
  }
  auto final_ckpt = snapshot();
  if (files) save_checkpoint_atomic(ckpt_path, final_ckpt);
  return final_ckpt;
}

int cmd_datagen(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  validate(cfg);
  const auto train = data::build_dataset(cfg.dataset_size, cfg.dataset_seed);
  const auto held_out = data::build_dataset(cfg.eval_size, cfg.eval_dataset_seed);
  const auto pairing = data::build_pairing_list(held_out, cfg.pairing_seed);
  make_dir(out_dir);
  data::write_dataset(out_dir / kTrainDatasetFile, train);
  data::write_dataset(out_dir / kEvalDatasetFile, held_out);
  data::write_pairing(out_dir / kEvalPairingFile, pairing);
  out << "wrote " << (out_dir / kTrainDatasetFile).string() << "\n" << dataset_summary(train);
  out << "wrote " << (out_dir / kEvalDatasetFile).string() << " (" << held_out.size() << " triplets) and "
      << (out_dir / kEvalPairingFile).string() << " (" << pairing.pairs.size() << " pairs)\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& out_dir, const std::optional<fs::path>& resume,
              std::ostream& out) {
  validate(cfg);
  const auto ds = load_train_data(cfg);
  TrainIo io;
  io.run_dir = out_dir;
  io.progress = &out;
  if (resume) io.resume = load_checkpoint_for(cfg, *resume);
  out << kTrainLogHeader << "\n";
  const auto c = train_model(ds, cfg, io);
  out << "checkpoint " << (out_dir / kCheckpointFile).string() << " at step " << c.step << "\n";
  return 0;
}

int cmd_sample(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir, std::ostream& out) {
  validate(cfg);
  const auto ckpt = load_checkpoint_for(cfg, checkpoint);
  const auto held_out = data::read_dataset(data_file(cfg, kEvalDatasetFile));
  if (cfg.sample_person >= held_out.size() || cfg.sample_garment >= held_out.size()) {
    throw UsageError("sample_person and sample_garment must be below " + std::to_string(held_out.size()));
  }
  const auto& person = held_out[cfg.sample_person];
  const auto& garment = held_out[cfg.sample_garment];
  std::vector<int> prompt;
  try {
    prompt = cfg.prompt.empty() ? garment.prompt : data::tokenize(cfg.prompt);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string(e.what()) + "; vocabulary: " + vocabulary_list());
  }
  flow::SamplerConfig sc;
  sc.steps = cfg.sampler_steps;
  sc.seed = cfg.sample_seed;
  const auto img = flow::sample(ckpt.params, cfg.model, person.person, garment.garment, person.pose, prompt, sc);

  make_dir(out_dir);
  const int n = data::kImageSize;
  write_ppm(out_dir / "sample.ppm", n, n, img.pixels);
  // person | garment | result
  std::vector<float> grid(static_cast<std::size_t>(3 * n * n * 3));
  const data::Image* panels[] = {&person.person, &garment.garment, &img};
  for (int k = 0; k < 3; ++k) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        for (int c = 0; c < 3; ++c) {
          grid[static_cast<std::size_t>((y * 3 * n + k * n + x) * 3 + c)] = panels[k]->at(x, y, c);
        }
      }
    }
  }
  write_ppm(out_dir / "grid.ppm", 3 * n, n, grid);
  out << "prompt \"" << data::detokenize(prompt) << "\"\n";
  out << "wrote " << (out_dir / "sample.ppm").string() << " and " << (out_dir / "grid.ppm").string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir, std::ostream& out) {
  validate(cfg);
  const auto ckpt = load_checkpoint_for(cfg, checkpoint);
  const auto d = load_eval_data(cfg);
  const auto rep = eval::run_unpaired_eval(ckpt.params, cfg.model, d.dataset, d.pairing, eval_config(cfg));
  make_dir(out_dir);
  write_text(out_dir / "eval_report.txt", eval::report_text(rep));
  write_text(out_dir / "eval_pairs.csv", eval::report_csv(rep));
  out << eval::report_text(rep);
  return 0;
}

std::vector<RunConfig> ablation_variants(const RunConfig& cfg) {
  std::vector<RunConfig> v(3, cfg);
  v[0].model.use_ref_pos_emb = false;
  v[0].model.use_attn_loss = false;
  v[1].model.use_ref_pos_emb = true;
  v[1].model.use_attn_loss = false;
  v[2].model.use_ref_pos_emb = true;
  v[2].model.use_attn_loss = true;
  return v;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << kAblationHeader << "\n";
  for (const auto& r : rows) {
    const auto& e = r.report;
    os << r.variant << "," << (r.use_ref_pos_emb ? "true" : "false") << "," << (r.use_attn_loss ? "true" : "false")
       << "," << fixed(e.ssim_mean) << "," << fixed(e.frechet) << "," << fixed(e.acc_kind) << "," << fixed(e.acc_color)
       << "," << fixed(e.acc_pattern) << "," << fixed(e.acc_fit) << "," << fixed(e.acc_overall) << ","
       << fixed(e.attention_mass_ratio_mean) << "\n";
  }
  return os.str();
}

int cmd_ablate(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  static constexpr std::array<const char*, 3> names{"baseline", "+ref-pos-emb", "+ref-pos-emb+attn-loss"};
  static constexpr std::array<const char*, 3> dirs{"baseline", "ref_pos_emb", "ref_pos_emb_attn_loss"};
  validate(cfg);
  const auto ds = load_train_data(cfg);
  const auto d = load_eval_data(cfg);
  const auto variants = ablation_variants(cfg);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    out << "training " << names[i] << "\n" << std::flush;
    TrainIo io;
    io.run_dir = out_dir / dirs[i];
    // A finished run of the same variant is reused.
    const auto existing = io.run_dir / kCheckpointFile;
    model::Checkpoint ckpt;
    bool reuse = false;
    if (fs::exists(existing)) {
      auto c = model::load_checkpoint(existing);
      if (c.run_config == to_text(v) && c.step == static_cast<std::uint64_t>(v.steps)) {
        ckpt = std::move(c);
        reuse = true;
      }
    }
    if (!reuse) ckpt = train_model(ds, v, io);
    AblationRow row;
    row.variant = names[i];
    row.use_ref_pos_emb = v.model.use_ref_pos_emb;
    row.use_attn_loss = v.model.use_attn_loss;
    row.report = eval::run_unpaired_eval(ckpt.params, v.model, d.dataset, d.pairing, eval_config(v));
    rows.push_back(std::move(row));
  }
  const auto table = ablation_table(rows);
  make_dir(out_dir);
  write_text(out_dir / "ablation.csv", table);
  out << table;
  return 0;
}

int cmd_gradcheck(std::ostream& out, const std::string& fault_op) {
  bool ok = true;
  for (const auto& r : ad::run_op_grad_checks(10, fault_op)) {
    out << (r.passed ? "PASS " : "FAIL ") << r.op << " worst_rel_error " << r.worst_rel_error << " (seed "
        << r.worst_seed << ")\n";
    ok = ok && r.passed;
  }
  const auto m = flow::run_model_grad_check();
  out << (m.passed ? "PASS " : "FAIL ") << "model worst_rel_error " << m.max_rel_error << " (" << m.worst_param
      << ")\n";
  ok = ok && m.passed;
  out << (ok ? "gradcheck passed" : "gradcheck FAILED") << "\n";
  return ok ? 0 : 2;
}

}  // namespace smf::cli
