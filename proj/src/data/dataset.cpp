#include "smf/data/dataset.hpp"

#include <stdexcept>

#include "smf/data/prompt.hpp"
#include "smf/data/render.hpp"
#include "smf/util/binary_io.hpp"

namespace smf::data {

GarmentSpec sample_garment(Rng& rng) {
  GarmentSpec g;
  g.kind = static_cast<GarmentKind>(rng.below(kNumKinds));
  g.color = static_cast<int>(rng.below(kNumColors));
  g.pattern = static_cast<Pattern>(rng.below(2));
  g.fit = static_cast<Fit>(rng.below(2));
  return canonical(g);
}

PoseSpec sample_pose(Rng& rng) {
  PoseSpec p;
  p.left_arm = static_cast<float>(rng.uniform(-kArmAngleLimit, kArmAngleLimit));
  p.right_arm = static_cast<float>(rng.uniform(-kArmAngleLimit, kArmAngleLimit));
  p.leg_spread = static_cast<float>(rng.uniform(0.0, kLegSpreadLimit));
  return p;
}

Triplet make_triplet(std::uint64_t seed) {
  Rng rng(seed);
  Triplet t;
  t.pose = sample_pose(rng);
  t.identity = rng.next();
  t.target_spec = sample_garment(rng);
  do {
    t.source_spec = sample_garment(rng);
  } while (t.source_spec == t.target_spec);
  t.person = render_person(t.pose, t.source_spec, t.identity);
  const auto target = render_person_layers(t.pose, t.target_spec, t.identity);
  t.target = target.image;
  t.mask = max_pool_mask(target.garment);
  t.garment = render_catalog(t.target_spec);
  t.prompt = prompt_from_spec(t.target_spec);
  return t;
}

Dataset build_dataset(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("build_dataset: n must be at least 1");
  Dataset ds;
  ds.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ds.push_back(make_triplet(seed ^ static_cast<std::uint64_t>(i)));
  return ds;
}

namespace {

void put_spec(ByteWriter& w, const GarmentSpec& g) {
  w.u8(static_cast<std::uint8_t>(g.kind));
  w.u8(static_cast<std::uint8_t>(g.color));
  w.u8(static_cast<std::uint8_t>(g.pattern));
  w.u8(static_cast<std::uint8_t>(g.fit));
}

GarmentSpec get_spec(ByteReader& r) {
  GarmentSpec g;
  g.kind = static_cast<GarmentKind>(r.u8());
  g.color = r.u8();
  g.pattern = static_cast<Pattern>(r.u8());
  g.fit = static_cast<Fit>(r.u8());
  try {
    validate(g);
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return g;
}

void put_image(ByteWriter& w, const Image& img) {
  w.u32(static_cast<std::uint32_t>(img.pixels.size()));
  w.f32_array(img.pixels);
}

Image get_image(ByteReader& r) {
  const auto n = r.u32();
  if (n != static_cast<std::uint32_t>(kImageSize * kImageSize * kChannels)) {
    r.fail("image has " + std::to_string(n) + " values, expected " +
           std::to_string(kImageSize * kImageSize * kChannels));
  }
  Image img;
  img.pixels = r.f32_array(n);
  return img;
}

}  // namespace

std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset) {
  ByteWriter w;
  w.magic("SMFD");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(dataset.size()));
  for (const auto& t : dataset) {
    const auto len_at = w.size();
    w.u32(0);
    put_spec(w, t.source_spec);
    put_spec(w, t.target_spec);
    w.u64(t.identity);
    w.f32(t.pose.left_arm);
    w.f32(t.pose.right_arm);
    w.f32(t.pose.leg_spread);
    w.u16(static_cast<std::uint16_t>(t.prompt.size()));
    for (int id : t.prompt) w.u16(static_cast<std::uint16_t>(id));
    put_image(w, t.person);
    put_image(w, t.garment);
    put_image(w, t.target);
    w.u32(static_cast<std::uint32_t>(t.mask.size()));
    w.bytes(t.mask);
    w.patch_u32(len_at, static_cast<std::uint32_t>(w.size() - len_at - 4));
  }
  return w.buffer();
}

Dataset parse_dataset(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("SMFD");
  const auto version = r.u32();
  if (version != kDatasetVersion) r.fail("unsupported dataset version " + std::to_string(version));
  const auto count = r.u32();
  Dataset ds;
  ds.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u32();
    const auto start = r.offset();
    Triplet t;
    t.source_spec = get_spec(r);
    t.target_spec = get_spec(r);
    t.identity = r.u64();
    t.pose.left_arm = r.f32();
    t.pose.right_arm = r.f32();
    t.pose.leg_spread = r.f32();
    const auto plen = r.u16();
    for (int k = 0; k < plen; ++k) {
      const int id = r.u16();
      if (id >= static_cast<int>(kVocabulary.size())) r.fail("prompt token " + std::to_string(id) + " out of vocabulary");
      t.prompt.push_back(id);
    }
    t.person = get_image(r);
    t.garment = get_image(r);
    t.target = get_image(r);
    const auto mlen = r.u32();
    if (mlen != static_cast<std::uint32_t>(kGridCells)) r.fail("mask has " + std::to_string(mlen) + " cells");
    const auto mask = r.bytes(mlen);
    std::copy(mask.begin(), mask.end(), t.mask.begin());
    if (r.offset() - start != len) r.fail("record " + std::to_string(i) + " length mismatch");
    ds.push_back(std::move(t));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last record");
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_file(path, serialize_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path), path.string()); }

GarmentSpec attribute_grid_spec(int index) {
  if (index < 0 || index >= kAttributeGridSize) {
    throw std::out_of_range("attribute grid index " + std::to_string(index) + " out of range");
  }
  GarmentSpec g;
  if (index < 48) {
    g.kind = static_cast<GarmentKind>(index / 24);
    g.color = (index / 4) % kNumColors;
    g.pattern = static_cast<Pattern>((index / 2) % 2);
    g.fit = static_cast<Fit>(index % 2);
  } else {
    g.kind = GarmentKind::kDress;
    g.color = (index - 48) / 2;
    g.pattern = static_cast<Pattern>((index - 48) % 2);
  }
  return g;
}

PairingList build_pairing_list(const Dataset& dataset, std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("build_pairing_list: empty dataset");
  Rng rng(seed);
  PairingList list;
  list.seed = seed;
  const auto n = static_cast<std::uint64_t>(dataset.size());
  for (std::uint64_t i = 0; i < n; ++i) {
    const GarmentSpec worn = canonical(dataset[i].source_spec);
    Pair p{static_cast<std::uint32_t>(i), 0};
    bool found = false;
    for (int attempt = 0; n > 1 && attempt < 256 && !found; ++attempt) {
      const auto j = rng.below(n);
      if (j != i && canonical(dataset[j].target_spec) != worn) {
        p.garment = static_cast<std::uint32_t>(j);
        found = true;
      }
    }
    while (!found) {
      const auto k = static_cast<int>(rng.below(kAttributeGridSize));
      if (attribute_grid_spec(k) != worn) {
        p.garment = static_cast<std::uint32_t>(k) | kGridGarmentFlag;
        found = true;
      }
    }
    list.pairs.push_back(p);
  }
  return list;
}

GarmentSpec paired_garment_spec(const Dataset& dataset, const Pair& pair) {
  if (pair.from_grid()) return attribute_grid_spec(static_cast<int>(pair.garment_index()));
  if (pair.garment_index() >= dataset.size()) {
    throw std::out_of_range("pair garment index " + std::to_string(pair.garment_index()) + " out of range");
  }
  return dataset[pair.garment_index()].target_spec;
}

Image paired_garment_image(const Dataset& dataset, const Pair& pair) {
  if (pair.from_grid()) return render_catalog(paired_garment_spec(dataset, pair));
  paired_garment_spec(dataset, pair);
  return dataset[pair.garment_index()].garment;
}

void validate_pairing(const Dataset& dataset, const PairingList& list) {
  for (std::size_t k = 0; k < list.pairs.size(); ++k) {
    const auto& p = list.pairs[k];
    if (p.person >= dataset.size()) throw std::invalid_argument("pair " + std::to_string(k) + ": person out of range");
    const auto g = canonical(paired_garment_spec(dataset, p));
    if (g == canonical(dataset[p.person].source_spec)) {
      throw std::invalid_argument("pair " + std::to_string(k) + ": garment " + describe(g) +
                                  " is already worn by person " + std::to_string(p.person));
    }
  }
}

std::vector<std::uint8_t> serialize_pairing(const PairingList& list) {
  ByteWriter w;
  w.magic("SMFP");
  w.u32(kPairingVersion);
  w.u64(list.seed);
  w.u32(static_cast<std::uint32_t>(list.pairs.size()));
  for (const auto& p : list.pairs) {
    w.u32(p.person);
    w.u32(p.garment);
  }
  return w.buffer();
}

PairingList parse_pairing(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  r.expect_magic("SMFP");
  const auto version = r.u32();
  if (version != kPairingVersion) r.fail("unsupported pairing version " + std::to_string(version));
  PairingList list;
  list.seed = r.u64();
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    Pair p;
    p.person = r.u32();
    p.garment = r.u32();
    list.pairs.push_back(p);
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last pair");
  return list;
}

void write_pairing(const std::filesystem::path& path, const PairingList& list) {
  write_file(path, serialize_pairing(list));
}

PairingList read_pairing(const std::filesystem::path& path) { return parse_pairing(read_file(path), path.string()); }

}  // namespace smf::data
