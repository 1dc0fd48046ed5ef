// phonest/common.h

// Copyright 2026  The phonest authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef PHONEST_COMMON_H_
#define PHONEST_COMMON_H_

#include <stdexcept>
#include <string>

namespace phonest {

// Error taxonomy. Everything user-facing throws one of these; all carry a
// human-readable message naming the offending shapes/ids/lines.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ParamError : std::runtime_error {
  explicit ParamError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IndexError : std::runtime_error {
  explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};
struct LookupError : std::runtime_error {
  explicit LookupError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConsistencyError : std::runtime_error {
  explicit ConsistencyError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Train/eval switch shared by dropout, batch norm and the models.
enum class Mode { kTrain, kEval };

}  // namespace phonest

#endif  // PHONEST_COMMON_H_
