#include "smf/model/checkpoint.hpp"

#include <map>

#include "smf/util/binary_io.hpp"

namespace smf::model {
namespace {

struct Entry {
  ad::Shape shape;
  std::span<const float> values;
};

void put_config(ByteWriter& w, const ModelConfig& c) {
  for (int v : {c.image_size, c.patch_size, c.channels, c.d_model, c.blocks, c.heads, c.vocab_size, c.max_prompt,
                c.mlp_ratio, c.time_frequencies}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u8(c.use_ref_pos_emb);
  w.u8(c.use_attn_loss);
  w.u8(c.use_pose);
}

ModelConfig get_config(ByteReader& r) {
  ModelConfig c;
  for (int* v : {&c.image_size, &c.patch_size, &c.channels, &c.d_model, &c.blocks, &c.heads, &c.vocab_size,
                 &c.max_prompt, &c.mlp_ratio, &c.time_frequencies}) {
    *v = static_cast<int>(r.u32());
  }
  c.use_ref_pos_emb = r.u8() != 0;
  c.use_attn_loss = r.u8() != 0;
  c.use_pose = r.u8() != 0;
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("invalid model config: ") + e.what());
  }
  return c;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::map<std::string, Entry> entries;
  for (const auto& [name, t] : ckpt.params) entries[name] = {t.shape(), t.values()};
  for (const auto& [name, m] : ckpt.adam.m) entries["adam.m." + name] = {{m.size()}, m};
  for (const auto& [name, v] : ckpt.adam.v) entries["adam.v." + name] = {{v.size()}, v};

  ByteWriter w;
  w.magic("SMFC");
  w.u32(kCheckpointVersion);
  put_config(w, ckpt.config);
  w.u64(ckpt.step);
  w.u64(ckpt.adam.step);
  w.str(ckpt.run_config);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, e] : entries) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32_array(e.values);
  }
  return w.buffer();
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("SMFC");
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.config = get_config(r);
  ckpt.step = r.u64();
  ckpt.adam.step = r.u64();
  ckpt.run_config = r.str();
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = r.str();
    const auto rank = r.u32();
    if (rank == 0 || rank > 8) r.fail("entry '" + name + "' has rank " + std::to_string(rank));
    ad::Shape shape(rank);
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) r.fail("entry '" + name + "' has a zero dimension");
    }
    auto values = r.f32_array(ad::numel(shape));
    if (name.rfind("adam.m.", 0) == 0) {
      ckpt.adam.m[name.substr(7)] = std::move(values);
    } else if (name.rfind("adam.v.", 0) == 0) {
      ckpt.adam.v[name.substr(7)] = std::move(values);
    } else {
      ckpt.params.emplace(name, Tensor<float>(shape, std::move(values)));
    }
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last entry");
  // Fail early on a checkpoint whose parameters do not match its own config.
  const auto expected = init_params(ckpt.config, 0);
  for (const auto& [name, t] : expected) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end()) r.fail("missing parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      r.fail("parameter '" + name + "' has shape " + ad::to_string(it->second.shape()) + ", expected " +
             ad::to_string(t.shape()));
    }
  }
  if (ckpt.params.size() != expected.size()) r.fail("unexpected extra parameters");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.string());
}

}  // namespace smf::model
