// tests/test_rng.cc

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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "phonest/common.h"
#include "phonest/rng.h"

using namespace phonest;

TEST_CASE("rng: same seed gives identical streams") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  CHECK(same == 0);
}

TEST_CASE("rng: split depends only on seed and key, not consumption") {
  Rng parent(777);
  Rng child_before = parent.split(42);
  for (int i = 0; i < 50; ++i) parent.next_u64();
  Rng child_after = parent.split(42);
  for (int i = 0; i < 20; ++i)
    CHECK(child_before.next_u64() == child_after.next_u64());

  Rng other_key = parent.split(43);
  Rng again(777);
  CHECK(other_key.next_u64() != again.split(42).next_u64());
}

TEST_CASE("rng: string and integer split keys both stable") {
  Rng parent(5);
  Rng a = parent.split("corruption");
  Rng b = parent.split("corruption");
  CHECK(a.next_u64() == b.next_u64());
  Rng c = parent.split("corruptiom");
  CHECK(a.next_u64() != c.next_u64());
}

TEST_CASE("rng: uniform lies in [0,1) and fills the range") {
  Rng r(9);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("rng: uniform_int covers the inclusive range uniformly") {
  Rng r(11);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) {
    int64_t v = r.uniform_int(3, 7);
    REQUIRE(v >= 3);
    REQUIRE(v <= 7);
    counts[static_cast<size_t>(v - 3)]++;
  }
  for (int c : counts) {
    CHECK(c > 9000);  // expectation 10000, generous band
    CHECK(c < 11000);
  }
  CHECK(r.uniform_int(4, 4) == 4);
  CHECK_THROWS_AS(r.uniform_int(5, 4), ParamError);
}

TEST_CASE("rng: normal has roughly standard moments") {
  Rng r(13);
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("rng: shuffle is a permutation and seed-stable") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng a(21), b(21);
  a.shuffle(&v);
  b.shuffle(&w);
  CHECK(v == w);
  std::set<int> uniq(v.begin(), v.end());
  CHECK(uniq.size() == 50);
  std::vector<int> sorted_v = v;
  std::sort(sorted_v.begin(), sorted_v.end());
  std::vector<int> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted_v == expect);
  CHECK(v != expect);  // 50 elements: identity is astronomically unlikely
}
