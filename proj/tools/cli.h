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

#ifndef ASF_TOOLS_CLI_H_
#define ASF_TOOLS_CLI_H_

#include <exception>
#include <vector>

namespace asf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidArgument = 2;
inline constexpr int kExitIoError = 3;
inline constexpr int kExitNumericalFailure = 4;

// Process exit code for an exception escaping a command.
int ExitCodeFor(const std::exception& e);

// Entry point of the `asfield` tool; returns the exit code.
int RunCli(int argc, const char* const* argv);

}  // namespace asf

#endif  // ASF_TOOLS_CLI_H_
