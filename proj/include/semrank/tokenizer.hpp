// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace semrank {

// Byte-level vocabulary: ids 0..255 are raw bytes, ids 256..263 are
// reserved specials. No learned vocabulary ships with the project.
inline constexpr int kByteVocab = 256;
inline constexpr int kTokenBos = 256;
inline constexpr int kTokenEos = 257;
inline constexpr int kTokenItemSep = 258;
inline constexpr int kTokenEmbedding = 259;  // placeholder for injected vectors
inline constexpr int kTokenPad = 260;
inline constexpr int kTokenYes = 261;
inline constexpr int kTokenNo = 262;
inline constexpr int kTokenSpare = 263;
inline constexpr int kNumSpecials = 8;
inline constexpr int kMinVocabSize = kByteVocab + kNumSpecials;

inline constexpr int kDefaultMaxSeq = 4096;

// Throws LengthOverflow when the sequence would exceed max_seq.
std::vector<int> tokenize(std::string_view text, int max_seq = kDefaultMaxSeq);

// Inverse on byte-clean input; special tokens are dropped.
std::string detokenize(std::span<const int> tokens);

}  // namespace semrank
