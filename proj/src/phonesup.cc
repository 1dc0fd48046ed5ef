// phonesup.cc

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

#include "phonest/phonesup.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "phonest/checkpoint.h"
#include "phonest/common.h"

namespace phonest {

PhoneInventory PhoneInventory::from_names(std::vector<std::string> names) {
  PhoneInventory inv;
  for (auto& n : names) inv.add(n);
  if (inv.size() != static_cast<int>(names.size())) {
    throw ParamError("phone inventory: duplicate names");
  }
  return inv;
}

int PhoneInventory::add(const std::string& name) {
  auto it = index_.find(name);
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(names_.size());
  names_.push_back(name);
  index_[name] = id;
  return id;
}

int PhoneInventory::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown phone label " + name);
  return it->second;
}

const std::string& PhoneInventory::name(int id) const {
  if (id < 0 || id >= size()) {
    throw IndexError("phone id " + std::to_string(id) + " out of range [0, " +
                     std::to_string(size()) + ")");
  }
  return names_[id];
}

bool PhoneInventory::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

std::vector<int> collapse_runs(const std::vector<int>& labels) {
  std::vector<int> out;
  for (int v : labels) {
    if (out.empty() || out.back() != v) out.push_back(v);
  }
  return out;
}

std::vector<Segment> segments(const std::vector<int>& labels) {
  std::vector<Segment> segs;
  for (int t = 0; t < static_cast<int>(labels.size()); ++t) {
    if (segs.empty() || segs.back().label != labels[t]) {
      segs.push_back({labels[t], t, 1});
    } else {
      ++segs.back().len;
    }
  }
  return segs;
}

std::vector<int> expand(const std::vector<Segment>& segs) {
  std::vector<int> labels;
  int pos = 0;
  for (const auto& s : segs) {
    if (s.len < 1) throw ConsistencyError("segment with length < 1");
    if (s.start != pos) {
      throw ConsistencyError("segment starts are not contiguous at frame " +
                             std::to_string(pos));
    }
    labels.insert(labels.end(), s.len, s.label);
    pos += s.len;
  }
  return labels;
}

Matrix average_by_segment(const Matrix& features, const std::vector<int>& labels) {
  if (features.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw ShapeError("average_by_segment: " + std::to_string(features.rows()) +
                     " feature rows vs " + std::to_string(labels.size()) +
                     " labels");
  }
  std::vector<Segment> segs = segments(labels);
  Matrix out(static_cast<Eigen::Index>(segs.size()), features.cols());
  for (size_t s = 0; s < segs.size(); ++s) {
    out.row(static_cast<Eigen::Index>(s)) =
        features.middleRows(segs[s].start, segs[s].len).colwise().mean();
  }
  return out;
}

Tensor factor_concat(const Matrix& features, const std::vector<int>& labels,
                     const Tensor& phone_embeddings) {
  if (features.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw ShapeError("factor_concat: " + std::to_string(features.rows()) +
                     " feature rows vs " + std::to_string(labels.size()) +
                     " labels");
  }
  return hconcat({Tensor::constant(features), rows(phone_embeddings, labels)});
}

const std::vector<QualityTier>& all_tiers() {
  static const std::vector<QualityTier> kTiers = {
      {"gold", 0.0, 0}, {"high", 0.10, 3}, {"med", 0.20, 3}, {"low", 0.35, 3}};
  return kTiers;
}

QualityTier tier_by_name(const std::string& name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(c)));
  for (const auto& t : all_tiers()) {
    if (t.name == lower) return t;
  }
  throw LookupError("unknown quality tier " + name);
}

namespace {

// 5 nearest prototype rows by Euclidean distance, excluding `self` and
// silence. With a smaller inventory, returns all eligible candidates.
std::vector<int> nearest_candidates(const Matrix& prototypes, int self,
                                    int silence_id) {
  std::vector<std::pair<double, int>> dist;
  for (Eigen::Index p = 0; p < prototypes.rows(); ++p) {
    int id = static_cast<int>(p);
    if (id == self || id == silence_id) continue;
    dist.emplace_back((prototypes.row(p) - prototypes.row(self)).squaredNorm(), id);
  }
  std::sort(dist.begin(), dist.end());
  std::vector<int> out;
  for (size_t i = 0; i < dist.size() && i < 5; ++i) out.push_back(dist[i].second);
  return out;
}

}  // namespace

PhoneAlignment corrupt(const PhoneAlignment& alignment, const QualityTier& tier,
                       const Matrix& prototypes, int silence_id, Rng* rng) {
  std::vector<Segment> segs = segments(alignment.labels);
  if (tier.p_sub > 0.0) {
    for (auto& s : segs) {
      if (s.label == silence_id) continue;
      if (s.label < 0 || s.label >= prototypes.rows()) {
        throw IndexError("corrupt: label " + std::to_string(s.label) +
                         " has no prototype");
      }
      if (rng->uniform() >= tier.p_sub) continue;
      std::vector<int> cands = nearest_candidates(prototypes, s.label, silence_id);
      if (cands.empty()) continue;
      s.label = cands[rng->uniform_int(0, static_cast<int>(cands.size()) - 1)];
    }
  }
  if (tier.jitter > 0) {
    for (size_t b = 0; b + 1 < segs.size(); ++b) {
      int d = rng->uniform_int(-tier.jitter, tier.jitter);
      d = std::max(d, -(segs[b].len - 1));
      d = std::min(d, segs[b + 1].len - 1);
      segs[b].len += d;
      segs[b + 1].len -= d;
      segs[b + 1].start += d;
    }
  }
  PhoneAlignment out;
  out.id = alignment.id;
  for (const auto& s : segs) out.labels.insert(out.labels.end(), s.len, s.label);
  return out;
}

std::vector<PhoneAlignment> load_alignments(const std::string& path,
                                            PhoneInventory* inventory) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open alignment file " + path);
  std::vector<PhoneAlignment> out;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto where = [&] { return path + ":" + std::to_string(lineno) + ": "; };
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(where() + "missing TAB separator");
    }
    PhoneAlignment a;
    a.id = line.substr(0, tab);
    if (a.id.empty()) throw ParseError(where() + "empty utterance id");
    std::string rest = line.substr(tab + 1);
    if (rest.empty()) throw ParseError(where() + "empty label sequence");
    size_t pos = 0;
    while (pos <= rest.size()) {
      size_t sp = rest.find(' ', pos);
      std::string tok = sp == std::string::npos ? rest.substr(pos)
                                                : rest.substr(pos, sp - pos);
      if (tok.empty()) throw ParseError(where() + "empty label field");
      a.labels.push_back(inventory->add(tok));
      if (sp == std::string::npos) break;
      pos = sp + 1;
    }
    out.push_back(std::move(a));
  }
  return out;
}

void write_alignments(const std::string& path,
                      const std::vector<PhoneAlignment>& alignments,
                      const PhoneInventory& inventory) {
  std::ostringstream out;
  for (const auto& a : alignments) {
    out << a.id << '\t';
    for (size_t t = 0; t < a.labels.size(); ++t) {
      if (t) out << ' ';
      out << inventory.name(a.labels[t]);
    }
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

void check_alignment_consistency(const std::vector<PhoneAlignment>& alignments,
                                 const std::vector<FeatureMatrix>& features) {
  std::unordered_map<std::string, Eigen::Index> frames;
  for (const auto& f : features) frames[f.id] = f.frames.rows();
  for (const auto& a : alignments) {
    auto it = frames.find(a.id);
    if (it == frames.end()) {
      throw ConsistencyError("alignment for utterance " + a.id +
                             " has no matching features");
    }
    if (it->second != static_cast<Eigen::Index>(a.labels.size())) {
      throw ConsistencyError(
          "utterance " + a.id + ": " + std::to_string(a.labels.size()) +
          " alignment frames vs " + std::to_string(it->second) +
          " feature frames");
    }
  }
}

}  // namespace phonest
