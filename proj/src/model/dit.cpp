#include "smf/model/dit.hpp"

#include <cmath>
#include <stdexcept>

#include "smf/autodiff/ops.hpp"
#include "smf/data/constants.hpp"
#include "smf/util/rng.hpp"

namespace smf::model {

using ad::Shape;

void validate(const ModelConfig& c) {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string(name) + " must be positive, got " + std::to_string(v));
  };
  positive(c.image_size, "image_size");
  positive(c.patch_size, "patch_size");
  positive(c.d_model, "d_model");
  positive(c.blocks, "blocks");
  positive(c.heads, "heads");
  positive(c.vocab_size, "vocab_size");
  positive(c.max_prompt, "max_prompt");
  positive(c.mlp_ratio, "mlp_ratio");
  positive(c.time_frequencies, "time_frequencies");
  if (c.channels != data::kChannels) throw std::invalid_argument("channels must be 3");
  if (c.image_size != data::kImageSize) {
    throw std::invalid_argument("image_size must be " + std::to_string(data::kImageSize));
  }
  if (c.image_size % c.patch_size != 0) throw std::invalid_argument("image_size must be divisible by patch_size");
  if (c.d_model % c.heads != 0) throw std::invalid_argument("d_model must be divisible by heads");
  if (c.vocab_size < static_cast<int>(data::kVocabulary.size())) {
    throw std::invalid_argument("vocab_size must cover the " + std::to_string(data::kVocabulary.size()) +
                                "-word vocabulary");
  }
}

namespace {

enum class Init { kNormal, kZero, kOne };

struct Spec {
  std::string name;
  Shape shape;
  Init init;
};

std::vector<Spec> layout(const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto pd = static_cast<std::size_t>(c.patch_dim());
  const auto hidden = d * static_cast<std::size_t>(c.mlp_ratio);
  std::vector<Spec> s{
      {"patch.w", {pd, d}, Init::kNormal},
      {"patch.b", {d}, Init::kZero},
      {"pos", {static_cast<std::size_t>(c.image_tokens()), d}, Init::kNormal},
      {"text.table", {static_cast<std::size_t>(c.vocab_size), d}, Init::kNormal},
      {"text.w1", {d, d}, Init::kNormal},
      {"text.b1", {d}, Init::kZero},
      {"text.w2", {d, d}, Init::kNormal},
      {"text.b2", {d}, Init::kZero},
      {"time.w1", {2 * static_cast<std::size_t>(c.time_frequencies), d}, Init::kNormal},
      {"time.b1", {d}, Init::kZero},
      {"time.w2", {d, d}, Init::kNormal},
      {"time.b2", {d}, Init::kZero},
      {"pose.w", {3, d}, Init::kNormal},
      {"pose.b", {d}, Init::kZero},
      {"head.ln.g", {d}, Init::kOne},
      {"head.ln.b", {d}, Init::kZero},
      {"head.w", {d, pd}, Init::kZero},
      {"head.b", {pd}, Init::kZero},
  };
  if (c.use_ref_pos_emb) s.push_back({"seg", {3, d}, Init::kNormal});
  for (int l = 0; l < c.blocks; ++l) {
    const std::string b = "blocks." + std::to_string(l) + ".";
    const std::vector<Spec> blk{
        {b + "ln1.g", {d}, Init::kOne},         {b + "ln1.b", {d}, Init::kZero},
        {b + "self.qkv.w", {d, 3 * d}, Init::kNormal}, {b + "self.qkv.b", {3 * d}, Init::kZero},
        {b + "self.out.w", {d, d}, Init::kNormal},     {b + "self.out.b", {d}, Init::kZero},
        {b + "ln2.g", {d}, Init::kOne},         {b + "ln2.b", {d}, Init::kZero},
        {b + "cross.q.w", {d, d}, Init::kNormal},      {b + "cross.q.b", {d}, Init::kZero},
        {b + "cross.kv.w", {d, 2 * d}, Init::kNormal}, {b + "cross.kv.b", {2 * d}, Init::kZero},
        {b + "cross.out.w", {d, d}, Init::kNormal},    {b + "cross.out.b", {d}, Init::kZero},
        {b + "ln3.g", {d}, Init::kOne},         {b + "ln3.b", {d}, Init::kZero},
        {b + "mlp.w1", {d, hidden}, Init::kNormal},    {b + "mlp.b1", {hidden}, Init::kZero},
        {b + "mlp.w2", {hidden, d}, Init::kNormal},    {b + "mlp.b2", {d}, Init::kZero},
    };
    s.insert(s.end(), blk.begin(), blk.end());
  }
  return s;
}

template <typename T>
const Tensor<T>& get(const Params<T>& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw std::invalid_argument("missing model parameter '" + name + "'");
  return it->second;
}

template <typename T>
Tensor<T> row(const Tensor<T>& table, std::size_t i) {
  return ad::reshape(ad::slice(table, 0, i, i + 1), Shape{table.dim(1)});
}

// (B, S, d) -> (B, H, S, d / H)
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  const auto b = x.dim(0), s = x.dim(1), d = x.dim(2);
  return ad::swap_axes(ad::reshape(x, Shape{b, s, heads, d / heads}), 1, 2);
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  const auto b = x.dim(0), h = x.dim(1), s = x.dim(2), dh = x.dim(3);
  return ad::reshape(ad::swap_axes(x, 1, 2), Shape{b, s, h * dh});
}

}  // namespace

Params<float> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  Params<float> p;
  for (const auto& s : layout(cfg)) {
    std::vector<float> v(ad::numel(s.shape), 0.0f);
    if (s.init == Init::kOne) std::fill(v.begin(), v.end(), 1.0f);
    if (s.init == Init::kNormal) {
      for (auto& x : v) x = static_cast<float>(0.02 * rng.normal());
    }
    p.emplace(s.name, Tensor<float>(s.shape, std::move(v)));
  }
  return p;
}

std::size_t parameter_count(const Params<float>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

template <typename T>
Params<T> cast_params(const Params<float>& params) {
  Params<T> out;
  for (const auto& [name, t] : params) {
    std::vector<T> v(t.values().begin(), t.values().end());
    out.emplace(name, Tensor<T>(t.shape(), std::move(v)));
  }
  return out;
}

std::vector<float> patchify(const data::Image& img, const ModelConfig& cfg) {
  if (img.pixels.size() != static_cast<std::size_t>(cfg.image_size * cfg.image_size * cfg.channels)) {
    throw std::invalid_argument("patchify: image has " + std::to_string(img.pixels.size()) + " values, expected " +
                                std::to_string(cfg.image_size * cfg.image_size * cfg.channels));
  }
  const int g = cfg.grid(), ps = cfg.patch_size, c = cfg.channels;
  std::vector<float> out(static_cast<std::size_t>(cfg.image_tokens() * cfg.patch_dim()));
  std::size_t k = 0;
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx)
      for (int py = 0; py < ps; ++py)
        for (int px = 0; px < ps; ++px)
          for (int ch = 0; ch < c; ++ch) out[k++] = img.at(gx * ps + px, gy * ps + py, ch);
  return out;
}

data::Image unpatchify(std::span<const float> tokens, const ModelConfig& cfg) {
  if (tokens.size() != static_cast<std::size_t>(cfg.image_tokens() * cfg.patch_dim())) {
    throw std::invalid_argument("unpatchify: got " + std::to_string(tokens.size()) + " values, expected " +
                                std::to_string(cfg.image_tokens() * cfg.patch_dim()));
  }
  const int g = cfg.grid(), ps = cfg.patch_size, c = cfg.channels;
  data::Image img;
  std::size_t k = 0;
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx)
      for (int py = 0; py < ps; ++py)
        for (int px = 0; px < ps; ++px)
          for (int ch = 0; ch < c; ++ch) img.at(gx * ps + px, gy * ps + py, ch) = tokens[k++];
  return img;
}

template <typename T>
Tensor<T> patchify_batch(std::span<const data::Image* const> images, const ModelConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.image_tokens()), pd = static_cast<std::size_t>(cfg.patch_dim());
  std::vector<T> v;
  v.reserve(images.size() * n * pd);
  for (const auto* img : images) {
    const auto p = patchify(*img, cfg);
    v.insert(v.end(), p.begin(), p.end());
  }
  return Tensor<T>(Shape{images.size(), n, pd}, std::move(v));
}

template <typename T>
TextTokens<T> embed_text(const Params<T>& p, const ModelConfig& cfg, std::span<const int> ids) {
  const auto len = static_cast<std::size_t>(cfg.max_prompt);
  if (ids.empty() || ids.size() % len != 0) {
    throw std::invalid_argument("embed_text: expected a multiple of " + std::to_string(len) + " ids, got " +
                                std::to_string(ids.size()));
  }
  for (int id : ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw std::out_of_range("embed_text: token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(cfg.vocab_size));
    }
  }
  const auto b = ids.size() / len;
  TextTokens<T> out;
  auto e = ad::embedding(get(p, "text.table"), ids);
  e = ad::linear(ad::gelu(ad::linear(e, get(p, "text.w1"), get(p, "text.b1"))), get(p, "text.w2"), get(p, "text.b2"));
  out.tokens = ad::reshape(e, Shape{b, len, static_cast<std::size_t>(cfg.d_model)});
  out.pad.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.pad[i] = ids[i] == data::kPadToken ? 1 : 0;
  return out;
}

template <typename T>
Tensor<T> embed_time(const Params<T>& p, const ModelConfig& cfg, std::span<const double> t) {
  const auto f = static_cast<std::size_t>(cfg.time_frequencies);
  std::vector<T> feats;
  feats.reserve(t.size() * 2 * f);
  for (double ti : t) {
    if (!(ti >= 0.0 && ti <= 1.0)) throw std::invalid_argument("embed_time: t = " + std::to_string(ti) + " outside [0, 1]");
    for (std::size_t k = 0; k < f; ++k) {
      // Frequencies log-spaced from 1 to 100 (radians per unit t).
      const double w = f > 1 ? std::pow(100.0, static_cast<double>(k) / static_cast<double>(f - 1)) : 1.0;
      feats.push_back(static_cast<T>(std::sin(w * ti)));
      feats.push_back(static_cast<T>(std::cos(w * ti)));
    }
  }
  Tensor<T> x(Shape{t.size(), 2 * f}, std::move(feats));
  return ad::linear(ad::gelu(ad::linear(x, get(p, "time.w1"), get(p, "time.b1"))), get(p, "time.w2"),
                    get(p, "time.b2"));
}

template <typename T>
Tensor<T> embed_pose(const Params<T>& p, const ModelConfig& cfg, std::span<const data::PoseSpec> pose) {
  std::vector<T> v;
  for (const auto& ps : pose) {
    const T on = cfg.use_pose ? T(1) : T(0);
    v.push_back(on * static_cast<T>(ps.left_arm));
    v.push_back(on * static_cast<T>(ps.right_arm));
    v.push_back(on * static_cast<T>(ps.leg_spread));
  }
  Tensor<T> x(Shape{pose.size(), 3}, std::move(v));
  return ad::reshape(ad::linear(x, get(p, "pose.w"), get(p, "pose.b")),
                     Shape{pose.size(), 1, static_cast<std::size_t>(cfg.d_model)});
}

template <typename T>
Tensor<T> embed_patches(const Params<T>& p, const Tensor<T>& patches) {
  return ad::linear(patches, get(p, "patch.w"), get(p, "patch.b"));
}

template <typename T>
std::pair<std::size_t, std::size_t> TokenSequence<T>::range(Segment s) const {
  std::size_t begin = segments.size(), end = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i] == s) {
      begin = std::min(begin, i);
      end = i + 1;
    }
  }
  if (begin >= end) throw std::invalid_argument("token sequence has no stream " + std::to_string(static_cast<int>(s)));
  for (std::size_t i = begin; i < end; ++i) {
    if (segments[i] != s) throw std::invalid_argument("token sequence stream is not contiguous");
  }
  return {begin, end};
}

template <typename T>
TokenSequence<T> assemble_sequence(const std::vector<Stream<T>>& streams, const Params<T>& p, const ModelConfig& cfg) {
  TokenSequence<T> seq;
  std::vector<Tensor<T>> parts;
  const auto n = static_cast<std::size_t>(cfg.image_tokens());
  for (const auto& st : streams) {
    const auto b = st.tokens.dim(0), len = st.tokens.dim(1);
    if (st.segment == Segment::kPose) {
      if (len != 1) throw std::invalid_argument("assemble_sequence: pose stream must hold one token");
      parts.push_back(st.tokens);
      seq.segments.push_back(Segment::kPose);
      seq.grid.push_back(-1);
      continue;
    }
    if (len != n) {
      throw std::invalid_argument("assemble_sequence: image stream has " + std::to_string(len) + " tokens, expected " +
                                  std::to_string(n));
    }
    auto x = ad::add(st.tokens, ad::expand(get(p, "pos"), 0, b));
    if (cfg.use_ref_pos_emb) x = ad::add_bias(x, row(get(p, "seg"), static_cast<std::size_t>(st.segment)));
    parts.push_back(x);
    for (std::size_t i = 0; i < len; ++i) {
      seq.segments.push_back(st.segment);
      seq.grid.push_back(static_cast<int>(i));
    }
  }
  seq.tokens = ad::concat<T>(parts, 1);
  return seq;
}

template <typename T>
Tensor<T> extract_attention_map(const Tensor<T>& probs, const std::vector<Segment>& segments) {
  TokenSequence<T> view;
  view.segments = segments;
  const auto [tb, te] = view.range(Segment::kTarget);
  const auto [gb, ge] = view.range(Segment::kGarment);
  auto rows = ad::slice(ad::slice(probs, 2, tb, te), 3, gb, ge);  // (B, H, n, n_garment)
  return ad::mean_axis(ad::sum_axis(rows, 3), 1);
}

template <typename T>
ForwardOutput<T> dit_forward(const TokenSequence<T>& seq, const TextTokens<T>& text, const Tensor<T>& time_emb,
                             const Params<T>& p, const ModelConfig& cfg, const ForwardOptions& opts) {
  const auto b = seq.tokens.dim(0), s = seq.tokens.dim(1), d = seq.tokens.dim(2);
  const auto heads = static_cast<std::size_t>(cfg.heads);
  const auto lt = text.tokens.dim(1);
  if (d != static_cast<std::size_t>(cfg.d_model) || text.tokens.dim(0) != b || time_emb.dim(0) != b) {
    throw ad::ShapeError("dit_forward: inconsistent batch or width: tokens " + ad::to_string(seq.tokens.shape()) +
                         ", text " + ad::to_string(text.tokens.shape()) + ", time " +
                         ad::to_string(time_emb.shape()));
  }
  const T attn_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d / heads)));

  // Additive key mask for padded prompt positions.
  bool any_pad = false;
  for (auto v : text.pad) any_pad = any_pad || v;
  Tensor<T> cross_mask;
  if (any_pad) {
    std::vector<T> m(b * heads * s * lt, T(0));
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t j = 0; j < lt; ++j)
        if (text.pad[bi * lt + j])
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t q = 0; q < s; ++q) m[((bi * heads + h) * s + q) * lt + j] = T(-1e9);
    cross_mask = Tensor<T>(Shape{b, heads, s, lt}, std::move(m));
  }

  ForwardOutput<T> out;
  auto x = ad::add(seq.tokens, ad::expand(time_emb, 1, s));
  for (int l = 0; l < cfg.blocks; ++l) {
    const std::string pre = "blocks." + std::to_string(l) + ".";
    auto P = [&](const char* name) -> const Tensor<T>& { return get(p, pre + name); };

    // Self-attention over the whole sequence.
    auto h = ad::layer_norm(x, P("ln1.g"), P("ln1.b"));
    auto qkv = ad::linear(h, P("self.qkv.w"), P("self.qkv.b"));
    auto q = ad::scale(split_heads(ad::slice(qkv, 2, 0, d), heads), attn_scale);
    auto k = split_heads(ad::slice(qkv, 2, d, 2 * d), heads);
    auto v = split_heads(ad::slice(qkv, 2, 2 * d, 3 * d), heads);
    auto probs = ad::softmax(ad::matmul(q, k, false, true));
    if (opts.record_attention) out.attention.push_back(extract_attention_map(probs, seq.segments));
    if (opts.keep_probs) out.self_probs.push_back(probs);
    x = ad::add(x, ad::linear(merge_heads(ad::matmul(probs, v)), P("self.out.w"), P("self.out.b")));

    // Cross-attention into the prompt.
    h = ad::layer_norm(x, P("ln2.g"), P("ln2.b"));
    auto cq = ad::scale(split_heads(ad::linear(h, P("cross.q.w"), P("cross.q.b")), heads), attn_scale);
    auto kv = ad::linear(text.tokens, P("cross.kv.w"), P("cross.kv.b"));
    auto ck = split_heads(ad::slice(kv, 2, 0, d), heads);
    auto cv = split_heads(ad::slice(kv, 2, d, 2 * d), heads);
    auto logits = ad::matmul(cq, ck, false, true);
    if (any_pad) logits = ad::add(logits, cross_mask);
    auto cprobs = ad::softmax(logits);
    if (opts.keep_probs) out.cross_probs.push_back(cprobs);
    x = ad::add(x, ad::linear(merge_heads(ad::matmul(cprobs, cv)), P("cross.out.w"), P("cross.out.b")));

    // Feed-forward.
    h = ad::layer_norm(x, P("ln3.g"), P("ln3.b"));
    x = ad::add(x, ad::linear(ad::gelu(ad::linear(h, P("mlp.w1"), P("mlp.b1"))), P("mlp.w2"), P("mlp.b2")));

    if (!ad::all_finite(x)) throw std::runtime_error("dit_forward: non-finite activation in block " + std::to_string(l));
  }

  const auto [tb, te] = seq.range(Segment::kTarget);
  auto target = ad::layer_norm(ad::slice(x, 1, tb, te), get(p, "head.ln.g"), get(p, "head.ln.b"));
  out.velocity = ad::linear(target, get(p, "head.w"), get(p, "head.b"));
  return out;
}

template <typename T>
ForwardOutput<T> velocity(const Params<T>& p, const ModelConfig& cfg, const Tensor<T>& noisy, const Conditioning& cond,
                          std::span<const double> t, const ForwardOptions& opts) {
  const auto b = cond.batch();
  if (cond.garment.size() != b || cond.pose.size() != b || t.size() != b || noisy.dim(0) != b ||
      cond.prompt.size() != b * static_cast<std::size_t>(cfg.max_prompt)) {
    throw std::invalid_argument("velocity: conditioning batch sizes disagree");
  }
  const auto person = patchify_batch<T>(cond.person, cfg);
  const auto garment = patchify_batch<T>(cond.garment, cfg);
  const std::vector<Stream<T>> streams{
      {Segment::kTarget, embed_patches(p, noisy)},
      {Segment::kPerson, embed_patches(p, person)},
      {Segment::kGarment, embed_patches(p, garment)},
      {Segment::kPose, embed_pose(p, cfg, cond.pose)},
  };
  const auto seq = assemble_sequence(streams, p, cfg);
  const auto text = embed_text(p, cfg, cond.prompt);
  const auto temb = embed_time(p, cfg, t);
  return dit_forward(seq, text, temb, p, cfg, opts);
}

#define SMF_INSTANTIATE_MODEL(T)                                                                                   \
  template Params<T> cast_params<T>(const Params<float>&);                                                        \
  template Tensor<T> patchify_batch<T>(std::span<const data::Image* const>, const ModelConfig&);                   \
  template TextTokens<T> embed_text<T>(const Params<T>&, const ModelConfig&, std::span<const int>);                \
  template Tensor<T> embed_time<T>(const Params<T>&, const ModelConfig&, std::span<const double>);                 \
  template Tensor<T> embed_pose<T>(const Params<T>&, const ModelConfig&, std::span<const data::PoseSpec>);         \
  template Tensor<T> embed_patches<T>(const Params<T>&, const Tensor<T>&);                                         \
  template struct TokenSequence<T>;                                                                                \
  template TokenSequence<T> assemble_sequence<T>(const std::vector<Stream<T>>&, const Params<T>&, const ModelConfig&); \
  template Tensor<T> extract_attention_map<T>(const Tensor<T>&, const std::vector<Segment>&);                     \
  template ForwardOutput<T> dit_forward<T>(const TokenSequence<T>&, const TextTokens<T>&, const Tensor<T>&,         \
                                           const Params<T>&, const ModelConfig&, const ForwardOptions&);          \
  template ForwardOutput<T> velocity<T>(const Params<T>&, const ModelConfig&, const Tensor<T>&, const Conditioning&, \
                                        std::span<const double>, const ForwardOptions&);

SMF_INSTANTIATE_MODEL(float)
SMF_INSTANTIATE_MODEL(double)

#undef SMF_INSTANTIATE_MODEL

}  // namespace smf::model
