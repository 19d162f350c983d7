#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smf/autodiff/adam.hpp"
#include "smf/autodiff/tensor.hpp"
#include "smf/data/types.hpp"
#include "smf/model/config.hpp"

// Conditional DiT velocity network. Every entry point is templated on the
// scalar type so the same graph runs in float32 for training and float64 for
// finite-difference checks.
namespace smf::model {

using ad::Tensor;
template <typename T>
using Params = ad::Parameters<T>;

enum class Segment : std::uint8_t { kTarget = 0, kPerson = 1, kGarment = 2, kPose = 3 };

// Weights ~ N(0, 0.02^2), biases 0, layer-norm gains 1, output head all zero.
Params<float> init_params(const ModelConfig& cfg, std::uint64_t seed);
std::size_t parameter_count(const Params<float>& params);

template <typename T>
Params<T> cast_params(const Params<float>& params);

// Non-overlapping patches in row-major patch order; inside a patch, pixels
// row-major with interleaved channels. Result is (tokens * patch_dim) flat.
std::vector<float> patchify(const data::Image& img, const ModelConfig& cfg);
data::Image unpatchify(std::span<const float> tokens, const ModelConfig& cfg);
// Stacks a batch of images into a (B, tokens, patch_dim) tensor.
template <typename T>
Tensor<T> patchify_batch(std::span<const data::Image* const> images, const ModelConfig& cfg);

template <typename T>
struct TextTokens {
  Tensor<T> tokens;                // (B, max_prompt, d)
  std::vector<std::uint8_t> pad;   // B * max_prompt, 1 = padded position
};

// `ids` holds B prompts of max_prompt ids each (pad with kPadToken).
template <typename T>
TextTokens<T> embed_text(const Params<T>& p, const ModelConfig& cfg, std::span<const int> ids);
// (B, d); each t must lie in [0, 1].
template <typename T>
Tensor<T> embed_time(const Params<T>& p, const ModelConfig& cfg, std::span<const double> t);
// (B, 1, d)
template <typename T>
Tensor<T> embed_pose(const Params<T>& p, const ModelConfig& cfg, std::span<const data::PoseSpec> pose);
// (B, tokens, patch_dim) -> (B, tokens, d)
template <typename T>
Tensor<T> embed_patches(const Params<T>& p, const Tensor<T>& patches);

template <typename T>
struct Stream {
  Segment segment;
  Tensor<T> tokens;  // (B, n, d)
};

template <typename T>
struct TokenSequence {
  Tensor<T> tokens;               // (B, S, d)
  std::vector<Segment> segments;  // per position
  std::vector<int> grid;          // grid cell per image token, -1 for the pose token

  // [begin, end) of a stream; throws if absent or not contiguous.
  std::pair<std::size_t, std::size_t> range(Segment s) const;
};

// Concatenates streams in the given order, adding the shared 2D positional
// embedding to image tokens and, when use_ref_pos_emb, a per-stream segment
// embedding.
template <typename T>
TokenSequence<T> assemble_sequence(const std::vector<Stream<T>>& streams, const Params<T>& p, const ModelConfig& cfg);

template <typename T>
struct ForwardOutput {
  Tensor<T> velocity;              // (B, tokens, patch_dim), target stream only
  std::vector<Tensor<T>> attention;  // per block, (B, tokens): target queries -> garment keys
  std::vector<Tensor<T>> self_probs; // per block (B, heads, S, S), only when keep_probs
  std::vector<Tensor<T>> cross_probs;
};

struct ForwardOptions {
  bool record_attention = true;
  bool keep_probs = false;  // retain raw attention weights (tests and diagnostics)
};

template <typename T>
ForwardOutput<T> dit_forward(const TokenSequence<T>& seq, const TextTokens<T>& text, const Tensor<T>& time_emb,
                             const Params<T>& p, const ModelConfig& cfg, const ForwardOptions& opts = {});

// probs (B, heads, S, S) -> (B, target tokens): head-mean of the attention
// mass each target query puts on the garment keys.
template <typename T>
Tensor<T> extract_attention_map(const Tensor<T>& probs, const std::vector<Segment>& segments);

// Everything the generator is conditioned on. There is no mask here.
struct Conditioning {
  std::vector<const data::Image*> person;
  std::vector<const data::Image*> garment;
  std::vector<data::PoseSpec> pose;
  std::vector<int> prompt;  // B * max_prompt padded ids
  std::size_t batch() const { return person.size(); }
};

// Full model: embeds all inputs, assembles [target | person | garment | pose]
// and runs the blocks. `noisy` is (B, tokens, patch_dim).
template <typename T>
ForwardOutput<T> velocity(const Params<T>& p, const ModelConfig& cfg, const Tensor<T>& noisy, const Conditioning& cond,
                          std::span<const double> t, const ForwardOptions& opts = {});

// Non-differentiable per-block attention maps for one sample (blocks x tokens).
struct AttentionRecord {
  std::vector<std::vector<float>> maps;
  std::size_t blocks() const { return maps.size(); }
};

}  // namespace smf::model
