#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smf/data/types.hpp"

namespace smf::data {

// "wear this {color} {pattern} {length} {kind}" plus "tucked in" for tucked tops.
std::string prompt_text(const GarmentSpec& garment);
std::vector<int> prompt_from_spec(const GarmentSpec& garment);

// Throws std::invalid_argument for words outside the vocabulary.
int token_id(std::string_view word);
std::vector<int> tokenize(std::string_view text);
// Space-joined words; pad ids are skipped. Throws std::out_of_range for bad ids.
std::string detokenize(std::span<const int> ids);

// Right-pads with kPadToken to `length`; throws if the prompt is longer.
std::vector<int> pad_prompt(std::span<const int> ids, int length = kMaxPromptLength);

}  // namespace smf::data
