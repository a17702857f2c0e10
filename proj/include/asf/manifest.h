// Copyright 2026 The asfield Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ASF_MANIFEST_H_
#define ASF_MANIFEST_H_

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

namespace asf {

inline constexpr const char* kVersion = "0.1.0";

// 64-bit FNV-1a as 16 lowercase hex digits.
std::string Fnv1aHex(std::string_view data);

// Hash of the canonical (sorted-key, compact) JSON dump.
std::string ConfigHash(const nlohmann::json& config);

// Library and dependency versions recorded in manifests.
nlohmann::json VersionInfo();

// Writes <dir>/manifest.json with the command, its full configuration, the
// configuration hash, the seed and version info. Throws IoError.
void WriteManifest(const std::string& dir, const std::string& command, const nlohmann::json& config,
                   uint64_t seed);

}  // namespace asf

#endif  // ASF_MANIFEST_H_
