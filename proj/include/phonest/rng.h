// phonest/rng.h

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

#ifndef PHONEST_RNG_H_
#define PHONEST_RNG_H_

#include <cstdint>
#include <string_view>
#include <vector>

namespace phonest {

// Seeded, splittable random stream (splitmix64 core). Every stochastic
// operation in the toolkit takes one of these explicitly; nothing draws from
// global state. Splitting derives an independent child stream from the
// parent's seed and a key, independent of how much the parent has already
// been consumed, so per-utterance streams are stable under any scheduling.
//
// All draws are computed with explicit arithmetic (no std::*_distribution),
// so sequences are identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of randomness.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Standard normal via Box-Muller (pairs cached).
  double normal();

  // Independent child stream. Depends only on (seed, key).
  Rng split(uint64_t key) const;
  Rng split(std::string_view key) const;

  // Fisher-Yates shuffle driven by this stream.
  template <typename T>
  void shuffle(std::vector<T>* v) {
    for (int64_t i = static_cast<int64_t>(v->size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(0, i);
      std::swap((*v)[static_cast<size_t>(i)], (*v)[static_cast<size_t>(j)]);
    }
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace phonest

#endif  // PHONEST_RNG_H_
