// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/tokenizer.hpp"

#include "semrank/error.hpp"

namespace semrank {

std::vector<int> tokenize(std::string_view text, int max_seq) {
  if (static_cast<long>(text.size()) > max_seq) {
    throw Error(ErrorCode::LengthOverflow,
                "text of " + std::to_string(text.size()) +
                    " bytes exceeds max_seq " + std::to_string(max_seq));
  }
  std::vector<int> tokens;
  tokens.reserve(text.size());
  for (unsigned char c : text) tokens.push_back(static_cast<int>(c));
  return tokens;
}

std::string detokenize(std::span<const int> tokens) {
  std::string text;
  text.reserve(tokens.size());
  for (int t : tokens) {
    if (t >= 0 && t < kByteVocab) text.push_back(static_cast<char>(t));
  }
  return text;
}

}  // namespace semrank
