#include "smf/flow/train.hpp"

#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "smf/autodiff/ops.hpp"
#include "smf/data/prompt.hpp"
#include "smf/util/rng.hpp"

namespace smf::flow {
namespace {

std::atomic<std::uint64_t> g_mask_reads{0};

const data::Mask& read_mask(const data::Triplet& t) {
  g_mask_reads.fetch_add(1, std::memory_order_relaxed);
  return t.mask;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(step ^ (salt << 56)));
}

}  // namespace

std::uint64_t mask_reads() { return g_mask_reads.load(); }
void reset_mask_reads() { g_mask_reads.store(0); }

void validate(const TrainOptions& opts) {
  if (!(opts.lambda_attn >= 0.0) || !std::isfinite(opts.lambda_attn)) {
    throw std::invalid_argument("lambda_attn must be a finite value >= 0");
  }
  if (!(opts.lr > 0.0) || !std::isfinite(opts.lr)) throw std::invalid_argument("lr must be a finite value > 0");
  if (!std::isfinite(opts.clip_norm)) throw std::invalid_argument("clip_norm must be finite");
}

TrainState init_train_state(const model::ModelConfig& cfg, std::uint64_t seed, const TrainOptions& opts) {
  validate(opts);
  TrainState st;
  st.params = model::init_params(cfg, seed);
  st.adam.options.lr = opts.lr;
  for (const auto& [name, t] : st.params) {
    st.adam.m[name].assign(t.size(), 0.0f);
    st.adam.v[name].assign(t.size(), 0.0f);
  }
  return st;
}

NoiseDraw draw_noise(std::uint64_t seed, std::uint64_t step, std::size_t batch, std::size_t per_item) {
  // t per triplet first, then z in triplet order.
  Rng rng(stream_seed(seed, step, 2));
  NoiseDraw d;
  d.t.resize(batch);
  for (auto& t : d.t) t = rng.uniform();
  d.z.resize(batch * per_item);
  for (auto& z : d.z) z = static_cast<float>(rng.normal());
  return d;
}

std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::uint64_t seed, std::uint64_t step) {
  if (n == 0 || batch == 0) throw std::invalid_argument("batch_indices: empty dataset or batch");
  if (batch > n) {
    throw std::invalid_argument("batch size " + std::to_string(batch) + " exceeds dataset size " + std::to_string(n));
  }
  // Partial Fisher-Yates over [0, n).
  Rng rng(stream_seed(seed, step, 1));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < batch; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(batch);
  return idx;
}

TrainStepReport train_step(std::span<const data::Triplet* const> batch, TrainState& state,
                           const model::ModelConfig& cfg, const TrainOptions& opts) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  validate(opts);
  const std::size_t b = batch.size();
  const std::size_t cells = static_cast<std::size_t>(cfg.image_tokens());
  const bool use_attn = cfg.use_attn_loss && opts.lambda_attn > 0.0;

  model::Conditioning cond;
  std::vector<const data::Image*> targets;
  for (const auto* t : batch) {
    cond.person.push_back(&t->person);
    cond.garment.push_back(&t->garment);
    cond.pose.push_back(t->pose);
    const auto ids = data::pad_prompt(t->prompt, cfg.max_prompt);
    cond.prompt.insert(cond.prompt.end(), ids.begin(), ids.end());
    targets.push_back(&t->target);
  }

  const auto x0 = model::patchify_batch<float>(targets, cfg);
  const std::size_t per = x0.size() / b;
  const auto draw = draw_noise(opts.seed, state.step, b, per);
  const auto& ts = draw.t;
  std::vector<float> xt(x0.size()), target(x0.size());
  for (std::size_t bi = 0; bi < b; ++bi) {
    const float a = static_cast<float>(1.0 - ts[bi]), c = static_cast<float>(ts[bi]);
    for (std::size_t i = bi * per; i < (bi + 1) * per; ++i) {
      xt[i] = a * x0[i] + c * draw.z[i];
      target[i] = x0[i] - draw.z[i];
    }
  }

  ad::Tape<float> tape;
  model::Params<float> leaves;
  for (const auto& [name, t] : state.params) leaves.emplace(name, tape.leaf(t));

  model::ForwardOptions fopts;
  fopts.record_attention = use_attn;
  const auto step_error = [&](const std::exception& e) {
    return std::runtime_error("step " + std::to_string(state.step + 1) + ": " + e.what());
  };
  model::ForwardOutput<float> out;
  try {
    out = model::velocity(leaves, cfg, ad::Tensor<float>(x0.shape(), std::move(xt)), cond, ts, fopts);
  } catch (const std::runtime_error& e) {
    throw step_error(e);
  }
  const auto fm = fm_loss(out.velocity, ad::Tensor<float>(x0.shape(), std::move(target)));
  auto total = fm;
  ad::Tensor<float> attn;
  if (use_attn) {
    std::vector<float> m(b * cells);
    for (std::size_t bi = 0; bi < b; ++bi) {
      const auto& mask = read_mask(*batch[bi]);
      for (std::size_t p = 0; p < cells; ++p) m[bi * cells + p] = mask[p];
    }
    attn = attn_loss(out.attention, ad::Tensor<float>({b, cells}, std::move(m)));
    total = ad::add(fm, ad::scale(attn, static_cast<float>(opts.lambda_attn)));
  }

  TrainStepReport rep;
  rep.step = state.step + 1;
  rep.fm_loss = fm.item();
  rep.attn_loss = use_attn ? attn.item() : 0.0;
  rep.total_loss = total.item();
  if (!std::isfinite(rep.total_loss)) {
    throw std::runtime_error("non-finite loss at step " + std::to_string(rep.step));
  }

  const auto grads = tape.backward(total);
  ad::ParamGrads g;
  for (const auto& [name, leaf] : leaves) {
    if (grads.has(leaf)) {
      g[name] = grads.of(leaf);
    } else {
      g[name].assign(leaf.size(), 0.0f);
    }
  }
  rep.grad_norm = ad::global_norm(g);
  if (!std::isfinite(rep.grad_norm)) {
    throw std::runtime_error("non-finite gradient at step " + std::to_string(rep.step));
  }
  if (opts.clip_norm > 0.0 && rep.grad_norm > opts.clip_norm) ad::scale_grads(g, opts.clip_norm / rep.grad_norm);
  state.adam.options.lr = opts.lr;
  ad::adam_step(state.params, g, state.adam);
  state.step += 1;
  return rep;
}

}  // namespace smf::flow
