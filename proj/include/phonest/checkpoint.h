// phonest/checkpoint.h

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

// JSON checkpoint container. Doubles are emitted in shortest round-trip
// form, so every finite f64 survives save/load bit-exactly.

#ifndef PHONEST_CHECKPOINT_H_
#define PHONEST_CHECKPOINT_H_

#include <map>
#include <string>

#include "json.hpp"
#include "phonest/tensor.h"

namespace phonest {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json meta;  // free-form run metadata (config echo, vocab sizes)
  std::map<std::string, Matrix> params;
  std::map<std::string, BatchNormStats> bn_stats;
  nlohmann::json optimizer;  // empty object when absent
};

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Generic JSON file helpers shared by configs, logs and metrics.
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j,
                     int indent = 2);

// Writes to <path>.tmp then renames, so readers never observe a torn file.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_text_file(const std::string& path);

}  // namespace phonest

#endif  // PHONEST_CHECKPOINT_H_
