#include "smf/flow/model_check.hpp"

#include <type_traits>
#include <vector>

#include "smf/autodiff/gradcheck.hpp"
#include "smf/autodiff/ops.hpp"
#include "smf/data/dataset.hpp"
#include "smf/data/prompt.hpp"
#include "smf/flow/flow_matching.hpp"
#include "smf/model/dit.hpp"
#include "smf/util/rng.hpp"

namespace smf::flow {

model::ModelConfig reduced_config() {
  model::ModelConfig c;
  c.d_model = 8;
  c.blocks = 1;
  c.heads = 2;
  return c;
}

ModelCheckReport run_model_grad_check(std::uint64_t seed) {
  const auto cfg = reduced_config();
  const auto ref = model::init_params(cfg, seed);
  std::vector<std::string> names;
  std::vector<ad::Shape> shapes;
  for (const auto& [name, t] : ref) {
    names.push_back(name);
    shapes.push_back(t.shape());
  }
  const auto triplet = data::make_triplet(seed + 1);
  model::Conditioning cond;
  cond.person.push_back(&triplet.person);
  cond.garment.push_back(&triplet.garment);
  cond.pose.push_back(triplet.pose);
  cond.prompt = data::pad_prompt(triplet.prompt, cfg.max_prompt);
  const data::Image* targets[] = {&triplet.target};
  constexpr double t = 0.35;
  Rng rng(seed + 2);
  std::vector<double> z(static_cast<std::size_t>(cfg.image_tokens() * cfg.patch_dim()));
  for (auto& v : z) v = rng.normal();

  ad::GradCheckOptions opts;
  opts.input_scale = 0.5;
  const auto res = ad::grad_check(
      [&](const auto& in) {
        using T = typename std::decay_t<decltype(in[0])>::value_type;
        model::Params<T> p;
        for (std::size_t i = 0; i < names.size(); ++i) p.emplace(names[i], in[i]);
        const auto x0 = model::patchify_batch<T>(targets, cfg);
        std::vector<T> xt(x0.size()), target(x0.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
          xt[i] = static_cast<T>((1.0 - t) * x0[i] + t * z[i]);
          target[i] = static_cast<T>(x0[i] - z[i]);
        }
        const auto out =
            model::velocity(p, cfg, ad::Tensor<T>(x0.shape(), xt), cond, std::vector<double>{t});
        const ad::Tensor<T> masks({1, triplet.mask.size()}, std::vector<T>(triplet.mask.begin(), triplet.mask.end()));
        return ad::add(fm_loss(out.velocity, ad::Tensor<T>(x0.shape(), target)),
                       ad::scale(attn_loss(out.attention, masks), static_cast<T>(kDefaultLambdaAttn)));
      },
      shapes, seed + 3, opts);

  ModelCheckReport rep;
  rep.max_rel_error = res.max_rel_error;
  rep.worst_param = names[res.worst_input];
  rep.worst_analytic = res.worst_analytic;
  rep.worst_numeric = res.worst_numeric;
  rep.passed = res.max_rel_error < kModelCheckTolerance;
  return rep;
}

}  // namespace smf::flow
