// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "semrank/tokenizer.hpp"

namespace semrank {

// Pointwise ranking prompt: system prefix + query context shared across
// all candidates of a request, one suffix-terminated document per item.
struct PromptParts {
  std::vector<int> prefix_tokens;  // system instructions + query context
  std::vector<int> item_tokens;    // document + fixed suffix
};

// Fixed suffix asking the binary relevance question; zero-shot template.
inline constexpr std::string_view kPromptSuffix = "\nRelevant (Yes/No): ";

PromptParts build_prompt(std::string_view system, std::string_view query_context,
                         std::string_view document,
                         int max_seq = kDefaultMaxSeq);

// Numeric features rendered into prompt text.
struct NumericFeatureSpec {
  enum class Kind { Continuous, Boolean, RatioWithCounts };
  struct Field {
    std::string name;  // descriptive identifier, e.g. "historical_ctr"
    Kind kind = Kind::Continuous;
    int decimals = 2;
  };
  std::vector<Field> fields;  // names unique, decimals >= 0

  const Field* find(std::string_view name) const;
  void validate() const;
};

struct FeatureValue {
  double value = 0.0;
  // Only read for RatioWithCounts: value rendered alongside num/den counts.
  long numerator = 0;
  long denominator = 0;
};

// One "name: value" line per feature in name order. Booleans render as
// True/False, ratios as "v (num/den)", continuous values are truncated
// (not rounded) to the field's decimal places.
std::string format_numeric_features(
    const std::map<std::string, FeatureValue>& features,
    const NumericFeatureSpec& spec);

}  // namespace semrank
