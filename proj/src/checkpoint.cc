// phonest/checkpoint.cc

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

#include "phonest/checkpoint.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace phonest {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  auto data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) data.push_back(m(i, k));
  j["data"] = std::move(data);
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw ParseError("matrix json: missing rows/cols/data");
  const auto rows = j["rows"].get<Eigen::Index>();
  const auto cols = j["cols"].get<Eigen::Index>();
  const auto& data = j["data"];
  if (rows < 0 || cols < 0 ||
      static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ParseError("matrix json: data length " + std::to_string(data.size()) +
                     " does not match " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  Matrix m(rows, cols);
  size_t at = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[at++].get<double>();
  return m;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot open for writing: " + tmp);
    out << contents;
    if (!out) throw ParseError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ParseError("rename failed: " + tmp + " -> " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("invalid json in " + path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j,
                     int indent) {
  write_file_atomic(path, j.dump(indent) + "\n");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format"] = "phonest-checkpoint";
  j["version"] = kCheckpointVersion;
  j["meta"] = ckpt.meta.is_null() ? nlohmann::json::object() : ckpt.meta;
  auto params = nlohmann::json::object();
  for (const auto& [name, m] : ckpt.params) {
    check_finite(m, "checkpoint parameter " + name);
    params[name] = matrix_to_json(m);
  }
  j["params"] = std::move(params);
  auto stats = nlohmann::json::object();
  for (const auto& [name, s] : ckpt.bn_stats) {
    if (!s.initialized())
      throw ContractError("checkpoint: uninitialized batch-norm stats " + name);
    stats[name] = {{"mean", matrix_to_json(s.running_mean)},
                   {"var", matrix_to_json(s.running_var)},
                   {"momentum", s.momentum}};
  }
  j["bn_stats"] = std::move(stats);
  j["optimizer"] =
      ckpt.optimizer.is_null() ? nlohmann::json::object() : ckpt.optimizer;
  write_json_file(path, j, /*indent=*/-1);
}

Checkpoint load_checkpoint(const std::string& path) {
  nlohmann::json j = read_json_file(path);
  if (j.value("format", "") != "phonest-checkpoint")
    throw ParseError("not a checkpoint file: " + path);
  if (j.value("version", 0) != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version in " + path);
  Checkpoint ckpt;
  ckpt.meta = j.value("meta", nlohmann::json::object());
  for (const auto& [name, m] : j.at("params").items())
    ckpt.params[name] = matrix_from_json(m);
  for (const auto& [name, s] : j.at("bn_stats").items()) {
    BatchNormStats st;
    Matrix mean = matrix_from_json(s.at("mean"));
    Matrix var = matrix_from_json(s.at("var"));
    st.running_mean = mean.row(0);
    st.running_var = var.row(0);
    st.momentum = s.value("momentum", st.momentum);
    ckpt.bn_stats[name] = st;
  }
  ckpt.optimizer = j.value("optimizer", nlohmann::json::object());
  return ckpt;
}

}  // namespace phonest
