// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "semrank/model.hpp"

namespace semrank {

// Binary weight container: 8-byte magic "SRNKWTS1", u32 format version,
// u64 manifest length, JSON manifest (config, model version, tensor
// name/shape/offset table), then raw little-endian float32 tensors in
// manifest order. Offsets are relative to the data section.
void save_weights(const ModelWeights& w, const std::string& path);
ModelWeights load_weights(const std::string& path);

}  // namespace semrank
