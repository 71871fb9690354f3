// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace semrank {

// Contract-violation categories. The CLI maps these to machine-parsable
// error records; library code throws and never prints.
enum class ErrorCode {
  LengthOverflow,   // sequence would exceed max_seq / batch budget
  MaskInvalid,      // malformed attention mask
  SpecViolation,    // argument violates an operation precondition
  PayloadInvalid,   // wrong embedding dimension / malformed wire payload
  SchemaUnknown,    // unknown attribute / feature name
  Alignment,        // features and weights disagree
  Divergence,       // non-finite loss during training
  Parameter,        // out-of-range hyperparameter
  DegenerateInput,  // zero vector, empty set where forbidden
  UndefinedMetric,  // single-class AUROC, zero-expected O/E
  StateInvalid,     // unfitted head, unloaded model
  OversizeItem,     // single work unit exceeds batch budget
  Consistency,      // conflicting scores for one cache key
  Reconciliation,   // ids fail to join across files
  Io,               // file missing / unreadable / bad magic
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace semrank
