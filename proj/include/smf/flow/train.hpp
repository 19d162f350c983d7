#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smf/autodiff/adam.hpp"
#include "smf/data/types.hpp"
#include "smf/flow/flow_matching.hpp"
#include "smf/model/config.hpp"
#include "smf/model/dit.hpp"

namespace smf::flow {

struct TrainOptions {
  double lambda_attn = kDefaultLambdaAttn;
  double lr = 1e-3;
  double clip_norm = 1.0;  // global gradient norm; <= 0 disables
  std::uint64_t seed = 0;  // noise and time stream
};

void validate(const TrainOptions& opts);

struct TrainState {
  model::Params<float> params;
  ad::AdamState adam;
  std::uint64_t step = 0;  // completed steps
};

TrainState init_train_state(const model::ModelConfig& cfg, std::uint64_t seed, const TrainOptions& opts);

struct TrainStepReport {
  std::uint64_t step = 0;  // 1-based index of the step just taken
  double fm_loss = 0.0;
  double attn_loss = 0.0;
  double total_loss = 0.0;
  double grad_norm = 0.0;  // before clipping
};

// One Adam update on the mean total loss over `batch`. Time and noise are
// drawn per triplet from a stream keyed by (opts.seed, state.step), so a
// resumed run repeats the same draws. Throws on a non-finite loss, naming the
// step, without touching the state.
TrainStepReport train_step(std::span<const data::Triplet* const> batch, TrainState& state,
                           const model::ModelConfig& cfg, const TrainOptions& opts);

struct NoiseDraw {
  std::vector<double> t;  // per triplet
  std::vector<float> z;   // batch * per_item, triplet-major
};

// The (t, z) draws train_step uses at `step` for a batch of `batch` items.
NoiseDraw draw_noise(std::uint64_t seed, std::uint64_t step, std::size_t batch, std::size_t per_item);

// The batch used at `step`: `batch` distinct indices in [0, n).
std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::uint64_t seed, std::uint64_t step);

// Instrumentation: counts every training-mask read.
std::uint64_t mask_reads();
void reset_mask_reads();

}  // namespace smf::flow
