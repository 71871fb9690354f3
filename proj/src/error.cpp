// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/error.hpp"

namespace semrank {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::LengthOverflow: return "length_overflow";
    case ErrorCode::MaskInvalid: return "mask_invalid";
    case ErrorCode::SpecViolation: return "spec_violation";
    case ErrorCode::PayloadInvalid: return "payload_invalid";
    case ErrorCode::SchemaUnknown: return "schema_unknown";
    case ErrorCode::Alignment: return "alignment";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::Parameter: return "parameter";
    case ErrorCode::DegenerateInput: return "degenerate_input";
    case ErrorCode::UndefinedMetric: return "undefined_metric";
    case ErrorCode::StateInvalid: return "state_invalid";
    case ErrorCode::OversizeItem: return "oversize_item";
    case ErrorCode::Consistency: return "consistency";
    case ErrorCode::Reconciliation: return "reconciliation";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace semrank
