// phonest/phonesup.h

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

// Phone alignment model and the phone-feature transforms: run collapsing,
// segment averaging, factored embedding concatenation, and quality-tier
// corruption.

#ifndef PHONEST_PHONESUP_H_
#define PHONEST_PHONESUP_H_

#include <string>
#include <vector>

#include "phonest/frontend.h"
#include "phonest/rng.h"
#include "phonest/tensor.h"

namespace phonest {

// Maps phone names to dense ids. When built by the synthesizer, silence is
// id 0 and the name table fixes the id order for every downstream file.
class PhoneInventory {
 public:
  PhoneInventory() = default;
  static PhoneInventory from_names(std::vector<std::string> names);

  // Returns the existing id or assigns the next free one.
  int add(const std::string& name);
  int id(const std::string& name) const;  // LookupError when absent
  const std::string& name(int id) const;  // IndexError when out of range
  bool contains(const std::string& name) const;
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> index_;
};

struct PhoneAlignment {
  std::string id;
  std::vector<int> labels;  // one phone id per frame
};

struct Segment {
  int label = 0;
  int start = 0;
  int len = 0;
};

// Maximal runs of identical labels, one token per run.
std::vector<int> collapse_runs(const std::vector<int>& labels);

std::vector<Segment> segments(const std::vector<int>& labels);
// Inverse of segments(); rejects non-contiguous or empty segments.
std::vector<int> expand(const std::vector<Segment>& segs);

// One row per segment, the mean of that segment's feature rows.
Matrix average_by_segment(const Matrix& features, const std::vector<int>& labels);

// Row t = features[t] followed by embedding[labels[t]]. The embedding table
// is trainable; gradients flow into it through the lookup.
Tensor factor_concat(const Matrix& features, const std::vector<int>& labels,
                     const Tensor& phone_embeddings);

struct QualityTier {
  std::string name;
  double p_sub = 0.0;  // per-segment substitution probability
  int jitter = 0;      // boundary jitter range in frames, +/-
};

// Gold (0, 0), High (0.10, 3), Med (0.20, 3), Low (0.35, 3).
// Name match is case-insensitive; unknown name is a LookupError.
QualityTier tier_by_name(const std::string& name);
const std::vector<QualityTier>& all_tiers();

// Per segment, substitutes the label with the tier's probability by a uniform
// draw over the 5 nearest phone prototypes (excluding the true label and
// silence), then jitters each internal boundary by an integer in
// [-jitter, +jitter] clamped so every segment keeps length >= 1. Total frame
// count is preserved and equal adjacent labels are re-merged.
PhoneAlignment corrupt(const PhoneAlignment& alignment, const QualityTier& tier,
                       const Matrix& prototypes, int silence_id, Rng* rng);

// Alignment TSV: one utterance per line, `id<TAB>space-separated labels`.
// Unknown labels extend the inventory in order of first appearance.
std::vector<PhoneAlignment> load_alignments(const std::string& path,
                                            PhoneInventory* inventory);
void write_alignments(const std::string& path,
                      const std::vector<PhoneAlignment>& alignments,
                      const PhoneInventory& inventory);

// Frame-count cross-check against a feature set; ConsistencyError names the
// first offending utterance.
void check_alignment_consistency(const std::vector<PhoneAlignment>& alignments,
                                 const std::vector<FeatureMatrix>& features);

}  // namespace phonest

#endif  // PHONEST_PHONESUP_H_
