#include "smf/cli/run_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "smf/data/prompt.hpp"

namespace smf::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw std::invalid_argument("not a valid number: \"" + v + "\"");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true or false, got \"" + v + "\"");
}

std::string format_double(double v) {
  // Shortest text that reads back to the same double.
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number(const char* key, T RunConfig::*member) {
  return {key, [member](RunConfig& c, const std::string& v) { c.*member = parse_number<T>(v); },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

template <typename T>
Field model_number(const char* key, T model::ModelConfig::*member) {
  return {key, [member](RunConfig& c, const std::string& v) { c.model.*member = parse_number<T>(v); },
          [member](const RunConfig& c) { return std::to_string(c.model.*member); }};
}

Field model_flag(const char* key, bool model::ModelConfig::*member) {
  return {key, [member](RunConfig& c, const std::string& v) { c.model.*member = parse_bool(v); },
          [member](const RunConfig& c) { return std::string(c.model.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      model_number("d_model", &model::ModelConfig::d_model),
      model_number("blocks", &model::ModelConfig::blocks),
      model_number("heads", &model::ModelConfig::heads),
      model_flag("use_ref_pos_emb", &model::ModelConfig::use_ref_pos_emb),
      model_flag("use_attn_loss", &model::ModelConfig::use_attn_loss),
      model_flag("use_pose", &model::ModelConfig::use_pose),
      number("lambda_attn", &RunConfig::lambda_attn),
      number("lr", &RunConfig::lr),
      number("clip_norm", &RunConfig::clip_norm),
      number("batch_size", &RunConfig::batch_size),
      number("steps", &RunConfig::steps),
      number("seed", &RunConfig::seed),
      number("log_every", &RunConfig::log_every),
      number("checkpoint_every", &RunConfig::checkpoint_every),
      {"data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; },
       [](const RunConfig& c) { return c.data_dir; }},
      number("dataset_size", &RunConfig::dataset_size),
      number("dataset_seed", &RunConfig::dataset_seed),
      number("eval_size", &RunConfig::eval_size),
      number("eval_dataset_seed", &RunConfig::eval_dataset_seed),
      number("pairing_seed", &RunConfig::pairing_seed),
      number("sampler_steps", &RunConfig::sampler_steps),
      number("sample_seed", &RunConfig::sample_seed),
      number("sample_person", &RunConfig::sample_person),
      number("sample_garment", &RunConfig::sample_garment),
      {"prompt", [](RunConfig& c, const std::string& v) { c.prompt = v; },
       [](const RunConfig& c) { return c.prompt; }},
      number("eval_seed", &RunConfig::eval_seed),
      number("eval_batch", &RunConfig::eval_batch),
  };
  return f;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::string& context) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = context + ":" + std::to_string(lineno) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw UsageError(where + "expected key = value");
    const auto key = trim(std::string_view(body).substr(0, eq));
    const auto value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw UsageError(where + "missing key");
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (key == f.key) field = &f;
    }
    if (!field) throw UsageError(where + "unknown key \"" + key + "\"");
    if (!seen.insert(key).second) throw UsageError(where + "duplicate key \"" + key + "\"");
    try {
      field->set(cfg, value);
    } catch (const std::exception& e) {
      throw UsageError(where + key + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

void validate(const RunConfig& c) {
  try {
    model::validate(c.model);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("model: ") + e.what());
  }
  const auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw UsageError(msg);
  };
  need(c.lambda_attn >= 0.0 && std::isfinite(c.lambda_attn), "lambda_attn must be finite and >= 0");
  need(c.lr > 0.0 && std::isfinite(c.lr), "lr must be finite and > 0");
  need(c.clip_norm > 0.0, "clip_norm must be > 0");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.steps >= 0, "steps must be >= 0");
  need(c.log_every >= 1, "log_every must be >= 1");
  need(c.checkpoint_every >= 1, "checkpoint_every must be >= 1");
  need(!c.data_dir.empty(), "data_dir must not be empty");
  need(c.dataset_size >= 1, "dataset_size must be >= 1");
  need(c.eval_size >= 2, "eval_size must be >= 2");
  need(c.sampler_steps >= 1, "sampler_steps must be >= 1");
  need(c.eval_batch >= 1, "eval_batch must be >= 1");
  if (!c.prompt.empty()) {
    try {
      const auto ids = data::tokenize(c.prompt);
      data::pad_prompt(ids, c.model.max_prompt);
    } catch (const std::exception& e) {
      std::string vocab;
      for (std::size_t i = 1; i < data::kVocabulary.size(); ++i) {
        vocab += (i > 1 ? " " : "");
        vocab += data::kVocabulary[i];
      }
      throw UsageError("prompt: " + std::string(e.what()) + "; vocabulary: " + vocab);
    }
  }
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.emplace_back(f.key);
  return k;
}

}  // namespace smf::cli
