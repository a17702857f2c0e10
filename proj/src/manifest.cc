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

#include "asf/manifest.h"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "Eigen/Core"
#include "asf/error.h"

namespace asf {

std::string Fnv1aHex(std::string_view data) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

std::string ConfigHash(const nlohmann::json& config) { return Fnv1aHex(config.dump()); }

nlohmann::json VersionInfo() {
  return {
      {"asfield", kVersion},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                    "." + std::to_string(EIGEN_MINOR_VERSION)},
      {"compiler", __VERSION__},
      {"cxx", static_cast<long>(__cplusplus)}};
}

void WriteManifest(const std::string& dir, const std::string& command, const nlohmann::json& config,
                   uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto path = std::filesystem::path(dir) / "manifest.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const nlohmann::json m = {{"command", command},
                            {"config", config},
                            {"config_hash", ConfigHash(config)},
                            {"seed", seed},
                            {"versions", VersionInfo()}};
  out << m.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

}  // namespace asf
