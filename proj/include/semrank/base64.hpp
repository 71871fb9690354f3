// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace semrank {

std::string base64_encode(std::span<const std::uint8_t> data);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// Little-endian float32 payloads, row-major.
std::string encode_f32_base64(std::span<const float> values);
std::vector<float> decode_f32_base64(const std::string& text);

}  // namespace semrank
