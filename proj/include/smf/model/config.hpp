#pragma once

#include <cstdint>

namespace smf::model {

struct ModelConfig {
  int image_size = 32;
  int patch_size = 4;
  int channels = 3;
  int d_model = 64;
  int blocks = 4;
  int heads = 4;
  int vocab_size = 32;
  int max_prompt = 12;
  int mlp_ratio = 4;
  int time_frequencies = 8;  // sin/cos pairs
  bool use_ref_pos_emb = true;
  bool use_attn_loss = true;
  bool use_pose = true;  // off: the pose token carries only its bias

  int grid() const { return image_size / patch_size; }
  int image_tokens() const { return grid() * grid(); }
  int patch_dim() const { return patch_size * patch_size * channels; }
  int seq_len() const { return 3 * image_tokens() + 1; }
  int head_dim() const { return d_model / heads; }

  bool operator==(const ModelConfig&) const = default;
};

// Throws std::invalid_argument naming the offending field.
void validate(const ModelConfig& cfg);

}  // namespace smf::model
