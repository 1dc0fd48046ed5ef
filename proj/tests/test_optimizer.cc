// tests/test_optimizer.cc

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

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "gradcheck.h"
#include "phonest/checkpoint.h"
#include "phonest/optimizer.h"

using namespace phonest;
using phonest::testing::random_matrix;

TEST_CASE("adam: zero gradient and zero state leave parameters unchanged") {
  Tensor p = Tensor::leaf(Matrix::Ones(2, 3));
  Adam opt({p}, {});
  // No grad at all.
  opt.step();
  CHECK((p.value() - Matrix::Ones(2, 3)).cwiseAbs().maxCoeff() == 0.0);
  // An explicit all-zero grad.
  backward(scale(sum_all(p), 0.0));
  REQUIRE(p.has_grad());
  opt.step();
  CHECK((p.value() - Matrix::Ones(2, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: zero gradient after warm state is still a parameter no-op") {
  Tensor p = Tensor::leaf(Matrix::Zero(1, 1));
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam opt({p}, cfg);
  backward(sum_all(p));  // grad = 1, warms the moments
  opt.step();
  double after_one = p.value()(0, 0);
  opt.zero_grad();
  backward(scale(sum_all(p), 0.0));  // grad = 0
  opt.step();
  CHECK(p.value()(0, 0) == after_one);
}

TEST_CASE("adam: first step with unit gradient moves by about lr") {
  Tensor p = Tensor::leaf(Matrix::Zero(3, 2));
  AdamConfig cfg;
  cfg.lr = 0.001;
  Adam opt({p}, cfg);
  backward(sum_all(p));  // d(sum)/dp = 1 everywhere
  opt.step();
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 2; ++j)
      CHECK(p.value()(i, j) == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam: constant unit gradient steps stay within 1e-6 of lr") {
  Tensor p = Tensor::leaf(Matrix::Zero(1, 1));
  AdamConfig cfg;
  cfg.lr = 0.001;
  Adam opt({p}, cfg);
  double prev = 0.0;
  for (int s = 0; s < 2; ++s) {
    opt.zero_grad();
    backward(sum_all(p));
    opt.step();
    double delta = p.value()(0, 0) - prev;
    prev = p.value()(0, 0);
    CHECK(std::abs(std::abs(delta) - cfg.lr) < 1e-6);
  }
}

TEST_CASE("adam: converges on a small least-squares problem") {
  Rng rng(200);
  Matrix target = random_matrix(3, 3, &rng);
  Tensor p = Tensor::leaf(Matrix::Zero(3, 3));
  AdamConfig cfg;
  cfg.lr = 0.05;
  Adam opt({p}, cfg);
  double first = 0.0, last = 0.0;
  for (int s = 0; s < 400; ++s) {
    opt.zero_grad();
    Tensor diff = sub(p, Tensor::constant(target));
    Tensor loss = sum_all(mul(diff, diff));
    if (s == 0) first = loss.value()(0, 0);
    last = loss.value()(0, 0);
    backward(loss);
    opt.step();
  }
  CHECK(last < first * 1e-3);
}

TEST_CASE("adam: state round-trips through json") {
  Rng rng(201);
  Tensor p = Tensor::leaf(random_matrix(2, 2, &rng));
  Tensor q = Tensor::leaf(random_matrix(1, 3, &rng));
  AdamConfig cfg;
  cfg.lr = 0.004;
  Adam opt({p, q}, cfg);
  for (int s = 0; s < 3; ++s) {
    opt.zero_grad();
    backward(add(sum_all(mul(p, p)), sum_all(mul(q, q))));
    opt.step();
  }
  nlohmann::json state = opt.state_json();

  Tensor p2 = Tensor::leaf(p.value());
  Tensor q2 = Tensor::leaf(q.value());
  Adam opt2({p2, q2}, cfg);
  opt2.load_state_json(state);
  CHECK(opt2.steps_done() == 3);

  // One more identical step on both must produce bit-identical parameters.
  auto advance = [](Adam* o, Tensor a, Tensor b) {
    o->zero_grad();
    backward(add(sum_all(mul(a, a)), sum_all(mul(b, b))));
    o->step();
  };
  advance(&opt, p, q);
  advance(&opt2, p2, q2);
  CHECK((p.value() - p2.value()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((q.value() - q2.value()).cwiseAbs().maxCoeff() == 0.0);

  Adam wrong({p2}, cfg);
  CHECK_THROWS_AS(wrong.load_state_json(state), ConsistencyError);
}

TEST_CASE("checkpoint: bit-exact f64 round-trip") {
  Rng rng(202);
  Checkpoint ckpt;
  ckpt.meta = {{"arch", "test"}, {"vocab", 17}};
  ckpt.params["enc.w"] = random_matrix(7, 5, &rng, 3.1415);
  ckpt.params["enc.b"] = random_matrix(1, 5, &rng, 1e-7);
  // Awkward values: denormals, negative zero, huge and tiny magnitudes.
  Matrix awkward(1, 6);
  awkward << 5e-324, -0.0, 1.7976931348623157e308, 2.2250738585072014e-308,
      1.0 / 3.0, -1e-15;
  ckpt.params["awkward"] = awkward;
  BatchNormStats st;
  st.init(4);
  st.running_mean << 0.1, -0.2, 0.3, 1.0 / 7.0;
  st.running_var << 1.0, 2.0, 1e-8, 9.9;
  ckpt.bn_stats["enc.bn0"] = st;
  ckpt.optimizer = {{"t", 12}};

  auto path = std::filesystem::temp_directory_path() / "phonest_ckpt_test.json";
  save_checkpoint(path.string(), ckpt);
  Checkpoint back = load_checkpoint(path.string());
  std::filesystem::remove(path);

  REQUIRE(back.params.size() == 3);
  for (const auto& [name, m] : ckpt.params) {
    REQUIRE(back.params.count(name) == 1);
    const Matrix& r = back.params[name];
    REQUIRE(r.rows() == m.rows());
    REQUIRE(r.cols() == m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        CHECK(std::memcmp(&r(i, j), &m(i, j), sizeof(double)) == 0);
      }
  }
  REQUIRE(back.bn_stats.count("enc.bn0") == 1);
  CHECK((back.bn_stats["enc.bn0"].running_mean - st.running_mean)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((back.bn_stats["enc.bn0"].running_var - st.running_var)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(back.optimizer["t"] == 12);
  CHECK(back.meta["vocab"] == 17);
}

TEST_CASE("checkpoint: malformed files are rejected with context") {
  auto dir = std::filesystem::temp_directory_path();
  auto path = (dir / "phonest_bad_ckpt.json").string();
  write_file_atomic(path, "{\"format\": \"something-else\"}");
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  write_file_atomic(path, "not json at all");
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);  // missing file
}
