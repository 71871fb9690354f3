// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/prompt.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "semrank/error.hpp"

namespace semrank {

PromptParts build_prompt(std::string_view system, std::string_view query_context,
                         std::string_view document, int max_seq) {
  std::string prefix_text;
  prefix_text.reserve(system.size() + query_context.size());
  prefix_text.append(system);
  prefix_text.append(query_context);

  std::string item_text;
  item_text.reserve(document.size() + kPromptSuffix.size());
  item_text.append(document);
  item_text.append(kPromptSuffix);

  if (static_cast<long>(prefix_text.size() + item_text.size()) > max_seq) {
    throw Error(ErrorCode::LengthOverflow,
                "prompt of " + std::to_string(prefix_text.size() + item_text.size()) +
                    " tokens exceeds max_seq " + std::to_string(max_seq));
  }
  if (prefix_text.empty()) {
    throw Error(ErrorCode::SpecViolation,
                "prompt prefix (system + query context) must be non-empty");
  }

  PromptParts parts;
  parts.prefix_tokens = tokenize(prefix_text, max_seq);
  parts.item_tokens = tokenize(item_text, max_seq);
  return parts;
}

const NumericFeatureSpec::Field* NumericFeatureSpec::find(
    std::string_view name) const {
  for (const auto& f : fields) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

void NumericFeatureSpec::validate() const {
  std::set<std::string> seen;
  for (const auto& f : fields) {
    if (!seen.insert(f.name).second) {
      throw Error(ErrorCode::SpecViolation,
                  "duplicate feature name in spec: " + f.name);
    }
    if (f.decimals < 0) {
      throw Error(ErrorCode::SpecViolation,
                  "negative decimal places for feature: " + f.name);
    }
  }
}

namespace {
// Truncation toward zero, per the prompt-format convention (0.12345 -> 0.12).
std::string truncate_decimal(double value, int decimals) {
  double scale = std::pow(10.0, decimals);
  double truncated = std::trunc(value * scale) / scale;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, truncated);
  return buf;
}
}  // namespace

std::string format_numeric_features(
    const std::map<std::string, FeatureValue>& features,
    const NumericFeatureSpec& spec) {
  spec.validate();
  std::string out;
  bool first = true;
  for (const auto& [name, fv] : features) {
    const auto* field = spec.find(name);
    if (field == nullptr) {
      throw Error(ErrorCode::SchemaUnknown, "feature not in spec: " + name);
    }
    if (!first) out.push_back('\n');
    first = false;
    out.append(name);
    out.append(": ");
    switch (field->kind) {
      case NumericFeatureSpec::Kind::Boolean:
        out.append(fv.value != 0.0 ? "True" : "False");
        break;
      case NumericFeatureSpec::Kind::RatioWithCounts:
        out.append(truncate_decimal(fv.value, field->decimals));
        out.append(" (");
        out.append(std::to_string(fv.numerator));
        out.push_back('/');
        out.append(std::to_string(fv.denominator));
        out.push_back(')');
        break;
      case NumericFeatureSpec::Kind::Continuous:
        out.append(truncate_decimal(fv.value, field->decimals));
        break;
    }
  }
  return out;
}

}  // namespace semrank
