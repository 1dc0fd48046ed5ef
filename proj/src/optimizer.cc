// phonest/optimizer.cc

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

#include "phonest/optimizer.h"

#include <cmath>

#include "phonest/checkpoint.h"

namespace phonest {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.lr <= 0.0) throw ParamError("adam: lr must be positive");
  if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 ||
      cfg_.beta2 >= 1.0)
    throw ParamError("adam: betas must lie in [0, 1)");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.defined() || !p.is_leaf())
      throw ContractError("adam: every parameter must be a leaf tensor");
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void Adam::set_lr(double lr) {
  if (lr <= 0.0) throw ParamError("adam: lr must be positive");
  cfg_.lr = lr;
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    const Matrix& g = p.grad();
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw ShapeError("adam: gradient shape does not match parameter " +
                       shape_str(p));
    if ((g.array() == 0.0).all()) continue;
    check_finite(g, "adam gradient");
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] +
            (1.0 - cfg_.beta2) * g.array().square().matrix();
    Matrix mhat = m_[i] / bc1;
    Matrix vhat = v_[i] / bc2;
    p.mutable_value().array() -=
        cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

nlohmann::json Adam::state_json() const {
  nlohmann::json j;
  j["t"] = t_;
  j["lr"] = cfg_.lr;
  j["beta1"] = cfg_.beta1;
  j["beta2"] = cfg_.beta2;
  j["eps"] = cfg_.eps;
  j["m"] = nlohmann::json::array();
  j["v"] = nlohmann::json::array();
  for (size_t i = 0; i < params_.size(); ++i) {
    j["m"].push_back(matrix_to_json(m_[i]));
    j["v"].push_back(matrix_to_json(v_[i]));
  }
  return j;
}

void Adam::load_state_json(const nlohmann::json& j) {
  if (!j.contains("t") || !j.contains("m") || !j.contains("v"))
    throw ParseError("adam state: missing fields");
  if (j["m"].size() != params_.size() || j["v"].size() != params_.size())
    throw ConsistencyError("adam state: parameter count mismatch, state has " +
                           std::to_string(j["m"].size()) + ", model has " +
                           std::to_string(params_.size()));
  std::vector<Matrix> m, v;
  for (size_t i = 0; i < params_.size(); ++i) {
    Matrix mi = matrix_from_json(j["m"][i]);
    Matrix vi = matrix_from_json(j["v"][i]);
    if (mi.rows() != params_[i].rows() || mi.cols() != params_[i].cols())
      throw ConsistencyError("adam state: moment shape mismatch at index " +
                             std::to_string(i));
    m.push_back(std::move(mi));
    v.push_back(std::move(vi));
  }
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = j["t"].get<std::int64_t>();
  cfg_.lr = j.value("lr", cfg_.lr);
  cfg_.beta1 = j.value("beta1", cfg_.beta1);
  cfg_.beta2 = j.value("beta2", cfg_.beta2);
  cfg_.eps = j.value("eps", cfg_.eps);
}

}  // namespace phonest
