#include "smf/flow/sampler.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "smf/data/prompt.hpp"
#include "smf/flow/flow_matching.hpp"
#include "smf/util/rng.hpp"

namespace smf::flow {

void validate(const SamplerConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("sampler steps must be >= 1, got " + std::to_string(cfg.steps));
}

std::vector<float> sample_noise(const model::ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> z(static_cast<std::size_t>(cfg.image_tokens() * cfg.patch_dim()));
  for (auto& v : z) v = static_cast<float>(rng.normal());
  return z;
}

std::vector<SampleResult> sample_batch(const model::Params<float>& params, const model::ModelConfig& cfg,
                                       std::span<const SampleRequest> requests, int steps, bool record_attention) {
  validate(SamplerConfig{steps, 0});
  if (requests.empty()) return {};
  const std::size_t b = requests.size();
  const std::size_t cells = static_cast<std::size_t>(cfg.image_tokens());
  const std::size_t pd = static_cast<std::size_t>(cfg.patch_dim());

  model::Conditioning cond;
  std::vector<float> x;
  x.reserve(b * cells * pd);
  for (const auto& r : requests) {
    if (!r.person || !r.garment) throw std::invalid_argument("sample: request without person or garment image");
    data::validate(r.pose);
    cond.person.push_back(r.person);
    cond.garment.push_back(r.garment);
    cond.pose.push_back(r.pose);
    const auto ids = data::pad_prompt(r.prompt, cfg.max_prompt);
    cond.prompt.insert(cond.prompt.end(), ids.begin(), ids.end());
    const auto z = sample_noise(cfg, r.seed);
    x.insert(x.end(), z.begin(), z.end());
  }

  std::vector<std::vector<double>> attn_sum;
  model::ForwardOptions fopts;
  fopts.record_attention = record_attention;
  const std::vector<std::size_t> shape{b, cells, pd};
  const VelocityField field = [&](std::span<const float> xs, double t, std::span<float> v) {
    const std::vector<double> ts(b, t);
    const auto out = model::velocity(params, cfg, ad::Tensor<float>(shape, std::vector<float>(xs.begin(), xs.end())),
                                     cond, ts, fopts);
    std::copy(out.velocity.values().begin(), out.velocity.values().end(), v.begin());
    if (record_attention) {
      attn_sum.resize(out.attention.size(), std::vector<double>(b * cells, 0.0));
      for (std::size_t l = 0; l < out.attention.size(); ++l)
        for (std::size_t i = 0; i < b * cells; ++i) attn_sum[l][i] += out.attention[l][i];
    }
  };
  x = euler_integrate(std::move(x), steps, field);

  std::vector<SampleResult> results(b);
  for (std::size_t bi = 0; bi < b; ++bi) {
    std::vector<float> tokens(x.begin() + static_cast<std::ptrdiff_t>(bi * cells * pd),
                              x.begin() + static_cast<std::ptrdiff_t>((bi + 1) * cells * pd));
    for (auto& v : tokens) v = std::clamp(v, 0.0f, 1.0f);
    results[bi].image = model::unpatchify(tokens, cfg);
    for (const auto& sum : attn_sum) {
      std::vector<float> m(cells);
      for (std::size_t p = 0; p < cells; ++p) m[p] = static_cast<float>(sum[bi * cells + p] / steps);
      results[bi].attention.maps.push_back(std::move(m));
    }
  }
  return results;
}

data::Image sample(const model::Params<float>& params, const model::ModelConfig& cfg, const data::Image& person,
                   const data::Image& garment, const data::PoseSpec& pose, std::span<const int> prompt,
                   const SamplerConfig& sampler) {
  validate(sampler);
  SampleRequest r;
  r.person = &person;
  r.garment = &garment;
  r.pose = pose;
  r.prompt.assign(prompt.begin(), prompt.end());
  r.seed = sampler.seed;
  return std::move(sample_batch(params, cfg, std::span<const SampleRequest>(&r, 1), sampler.steps)[0].image);
}

}  // namespace smf::flow
