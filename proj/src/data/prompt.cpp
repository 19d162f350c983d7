#include "smf/data/prompt.hpp"

#include <sstream>
#include <stdexcept>

namespace smf::data {

std::string prompt_text(const GarmentSpec& spec) {
  validate(spec);
  const GarmentSpec garment = canonical(spec);
  std::string s = "wear this ";
  s += kColorNames[static_cast<std::size_t>(garment.color)];
  s += garment.pattern == Pattern::kStripes ? " striped" : " solid";
  switch (garment.kind) {
    case GarmentKind::kTshirt:
      s += " short-sleeved tshirt";
      break;
    case GarmentKind::kLongsleeve:
      s += " long-sleeved top";
      break;
    case GarmentKind::kDress:
      s += " sleeveless dress";
      break;
  }
  if (garment.fit == Fit::kTucked) s += " tucked in";
  return s;
}

std::vector<int> prompt_from_spec(const GarmentSpec& garment) { return tokenize(prompt_text(garment)); }

int token_id(std::string_view word) {
  for (std::size_t i = 1; i < kVocabulary.size(); ++i) {
    if (kVocabulary[i] == word) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown word \"" + std::string(word) + "\"");
}

std::vector<int> tokenize(std::string_view text) {
  std::vector<int> ids;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) ids.push_back(token_id(w));
  return ids;
}

std::string detokenize(std::span<const int> ids) {
  std::string s;
  for (int id : ids) {
    if (id < 0 || id >= static_cast<int>(kVocabulary.size())) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    }
    if (id == kPadToken) continue;
    if (!s.empty()) s += ' ';
    s += kVocabulary[static_cast<std::size_t>(id)];
  }
  return s;
}

std::vector<int> pad_prompt(std::span<const int> ids, int length) {
  if (static_cast<int>(ids.size()) > length) {
    throw std::invalid_argument("prompt has " + std::to_string(ids.size()) + " tokens, limit is " +
                                std::to_string(length));
  }
  std::vector<int> out(ids.begin(), ids.end());
  out.resize(static_cast<std::size_t>(length), kPadToken);
  return out;
}

}  // namespace smf::data
