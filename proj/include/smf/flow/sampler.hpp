#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smf/data/types.hpp"
#include "smf/model/config.hpp"
#include "smf/model/dit.hpp"

namespace smf::flow {

inline constexpr int kDefaultSamplerSteps = 25;

struct SamplerConfig {
  int steps = kDefaultSamplerSteps;
  std::uint64_t seed = 0;
};

void validate(const SamplerConfig& cfg);

// One try-on request. Inference is mask-free: nothing here describes where
// the garment goes.
struct SampleRequest {
  const data::Image* person = nullptr;
  const data::Image* garment = nullptr;
  data::PoseSpec pose;
  std::vector<int> prompt;  // unpadded or padded ids
  std::uint64_t seed = 0;   // noise for this request
};

struct SampleResult {
  data::Image image;
  model::AttentionRecord attention;  // per block, averaged over the sampling steps
};

// Euler sampling of each request, run as one batch. Pixels are clamped to [0, 1].
std::vector<SampleResult> sample_batch(const model::Params<float>& params, const model::ModelConfig& cfg,
                                       std::span<const SampleRequest> requests, int steps,
                                       bool record_attention = false);

data::Image sample(const model::Params<float>& params, const model::ModelConfig& cfg, const data::Image& person,
                   const data::Image& garment, const data::PoseSpec& pose, std::span<const int> prompt,
                   const SamplerConfig& sampler);

// Noise in patch-token space for a request seed.
std::vector<float> sample_noise(const model::ModelConfig& cfg, std::uint64_t seed);

}  // namespace smf::flow
