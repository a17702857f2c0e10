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

#ifndef ASF_ERROR_H_
#define ASF_ERROR_H_

#include <stdexcept>
#include <string>

namespace asf {

// Error taxonomy shared by the library and the CLI. The CLI maps each class
// to a process exit code (see ExitCodeFor in tools/).

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NRE with an all-zero target field.
class UndefinedMetric : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class TrainingDiverged : public NumericalFailure {
 public:
  TrainingDiverged(int epoch, const std::string& what) : NumericalFailure(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// No scatterer points inside the search ball around a region center.
class EmptyRegion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidScene : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

}  // namespace asf

#endif  // ASF_ERROR_H_
