#include "smf/eval/unpaired.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "smf/data/prompt.hpp"
#include "smf/data/render.hpp"
#include "smf/eval/metrics.hpp"
#include "smf/flow/sampler.hpp"
#include "smf/util/rng.hpp"

namespace smf::eval {
namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::uint64_t pair_seed(std::uint64_t seed, const data::Pair& pair) {
  return splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(pair.person) << 32) | pair.garment));
}

PairTask pair_task(const data::Dataset& dataset, const data::Pair& pair) {
  if (pair.person >= dataset.size()) {
    throw std::out_of_range("pair person index " + std::to_string(pair.person) + " outside dataset of " +
                            std::to_string(dataset.size()));
  }
  const auto& person = dataset[pair.person];
  PairTask t;
  t.pose = person.pose;
  t.identity = person.identity;
  t.garment = data::paired_garment_spec(dataset, pair);
  t.catalog = data::paired_garment_image(dataset, pair);
  t.prompt = data::prompt_from_spec(t.garment);
  t.truth = data::render_person(t.pose, t.garment, t.identity);
  t.mask = data::garment_mask(t.pose, t.garment);
  return t;
}

EvalReport score_pairs(const data::Dataset& dataset, const data::PairingList& pairing,
                       const std::vector<data::Image>& generated,
                       const std::vector<model::AttentionRecord>& attention) {
  data::validate_pairing(dataset, pairing);
  const std::size_t n = pairing.pairs.size();
  if (generated.size() != n || attention.size() != n) {
    throw std::invalid_argument("score_pairs: expected " + std::to_string(n) + " outputs, got " +
                                std::to_string(generated.size()) + " images and " + std::to_string(attention.size()) +
                                " attention records");
  }
  if (n < 2) throw std::invalid_argument("score_pairs: need at least 2 pairs");
  EvalReport rep;
  rep.n_samples = n;
  rep.pairing_seed = pairing.seed;
  std::vector<Feature> gen_feats, true_feats;
  double ssim_sum = 0, mass_sum = 0;
  int kind = 0, color = 0, pattern = 0, fit = 0, all = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto task = pair_task(dataset, pairing.pairs[i]);
    PairRecord r;
    r.person = pairing.pairs[i].person;
    r.garment = pairing.pairs[i].garment;
    r.truth = task.garment;
    r.predicted = attribute_oracle(generated[i], task.pose).spec;
    r.ssim = ssim(generated[i], task.truth);
    r.mass_ratio = attention[i].maps.empty() ? 0.0 : attention_mass_ratio(attention[i], task.mask);
    r.kind_ok = r.predicted.kind == r.truth.kind;
    r.color_ok = r.predicted.color == r.truth.color;
    r.pattern_ok = r.predicted.pattern == r.truth.pattern;
    r.fit_ok = r.predicted.fit == r.truth.fit;
    kind += r.kind_ok;
    color += r.color_ok;
    pattern += r.pattern_ok;
    fit += r.fit_ok;
    all += r.kind_ok && r.color_ok && r.pattern_ok && r.fit_ok;
    ssim_sum += r.ssim;
    mass_sum += r.mass_ratio;
    gen_feats.push_back(feature_extract(generated[i]));
    true_feats.push_back(feature_extract(task.truth));
    rep.pairs.push_back(r);
  }
  const double dn = static_cast<double>(n);
  rep.ssim_mean = ssim_sum / dn;
  rep.attention_mass_ratio_mean = mass_sum / dn;
  rep.acc_kind = kind / dn;
  rep.acc_color = color / dn;
  rep.acc_pattern = pattern / dn;
  rep.acc_fit = fit / dn;
  rep.acc_overall = all / dn;
  rep.frechet = frechet_distance(gen_feats, true_feats);
  return rep;
}

EvalReport run_unpaired_eval(const model::Params<float>& params, const model::ModelConfig& cfg,
                             const data::Dataset& dataset, const data::PairingList& pairing, const EvalConfig& ecfg) {
  data::validate_pairing(dataset, pairing);
  if (ecfg.batch == 0) throw std::invalid_argument("eval batch must be >= 1");
  std::vector<PairTask> tasks;
  for (const auto& p : pairing.pairs) tasks.push_back(pair_task(dataset, p));
  std::vector<data::Image> images;
  std::vector<model::AttentionRecord> attention;
  for (std::size_t begin = 0; begin < tasks.size(); begin += ecfg.batch) {
    const std::size_t end = std::min(tasks.size(), begin + ecfg.batch);
    std::vector<flow::SampleRequest> reqs;
    for (std::size_t i = begin; i < end; ++i) {
      flow::SampleRequest r;
      r.person = &dataset[pairing.pairs[i].person].person;
      r.garment = &tasks[i].catalog;
      r.pose = tasks[i].pose;
      r.prompt = tasks[i].prompt;
      r.seed = pair_seed(ecfg.seed, pairing.pairs[i]);
      reqs.push_back(std::move(r));
    }
    auto results = flow::sample_batch(params, cfg, reqs, ecfg.sampler_steps, true);
    for (auto& res : results) {
      images.push_back(std::move(res.image));
      attention.push_back(std::move(res.attention));
    }
  }
  return score_pairs(dataset, pairing, images, attention);
}

std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  os << "n_samples = " << r.n_samples << "\n"
     << "pairing_seed = " << r.pairing_seed << "\n"
     << "ssim_mean = " << fixed(r.ssim_mean) << "\n"
     << "frechet = " << fixed(r.frechet) << "\n"
     << "accuracy_kind = " << fixed(r.acc_kind) << "\n"
     << "accuracy_color = " << fixed(r.acc_color) << "\n"
     << "accuracy_pattern = " << fixed(r.acc_pattern) << "\n"
     << "accuracy_fit = " << fixed(r.acc_fit) << "\n"
     << "accuracy_overall = " << fixed(r.acc_overall) << "\n"
     << "attention_mass_ratio_mean = " << fixed(r.attention_mass_ratio_mean) << "\n";
  return os.str();
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << kReportCsvHeader << "\n";
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const auto& p = r.pairs[i];
    os << i << "," << p.person << "," << p.garment << "," << data::describe(p.truth) << ","
       << data::describe(p.predicted) << "," << fixed(p.ssim) << "," << fixed(p.mass_ratio) << "," << p.kind_ok << ","
       << p.color_ok << "," << p.pattern_ok << "," << p.fit_ok << "\n";
  }
  return os.str();
}

}  // namespace smf::eval
