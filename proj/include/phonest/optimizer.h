// phonest/optimizer.h

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

#ifndef PHONEST_OPTIMIZER_H_
#define PHONEST_OPTIMIZER_H_

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "phonest/tensor.h"

namespace phonest {

struct AdamConfig {
  double lr = 0.0003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list.
//
// A parameter whose gradient is absent or identically zero is skipped for
// that step: its value and moment estimates do not change. This keeps
// untouched parameters (e.g. embedding rows outside the batch) bit-stable.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  void step();
  void zero_grad();

  double lr() const { return cfg_.lr; }
  void set_lr(double lr);
  std::int64_t steps_done() const { return t_; }

  nlohmann::json state_json() const;
  void load_state_json(const nlohmann::json& j);

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

}  // namespace phonest

#endif  // PHONEST_OPTIMIZER_H_
