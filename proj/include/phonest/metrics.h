// phonest/metrics.h

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

// Corpus-level translation and recognition metrics: multi-reference BLEU,
// average single-reference BLEU, and WER. Tokens are whitespace units of
// already-normalized text.

#ifndef PHONEST_METRICS_H_
#define PHONEST_METRICS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace phonest {

using Tokens = std::vector<std::string>;

struct ScoreReport {
  std::string metric;
  double value = 0.0;  // BLEU in percent, WER as a rate (may exceed 1)
  std::vector<double> precisions;  // modified n-gram precisions, n = 1..max_n
  double brevity_penalty = 1.0;
  std::int64_t hyp_tokens = 0;
  std::int64_t ref_tokens = 0;  // closest-reference sum for BLEU
  int max_n = 4;
  bool smoothing = false;

  nlohmann::json to_json() const;
  // One line: metric, value, then the per-n precisions and BP.
  std::string tsv_row() const;
  static std::string tsv_header();
};

// Multi-reference corpus BLEU. Counts are clipped at the per-n-gram maximum
// across each segment's references; the brevity penalty uses the closest
// reference length per segment, ties resolved toward the shorter reference.
// Any zero precision yields BLEU 0 unless smoothing is on (add-1 to numerator
// and denominator for n >= 2).
ScoreReport corpus_bleu(const std::vector<Tokens>& hyps,
                        const std::vector<std::vector<Tokens>>& ref_sets,
                        int max_n = 4, bool smoothing = false);

// Arithmetic mean of corpus_bleu against each reference stream separately.
// streams[k][i] is stream k's reference for segment i. Reported precisions
// and brevity penalty are the means of the per-stream values.
ScoreReport avg_single_ref_bleu(const std::vector<Tokens>& hyps,
                                const std::vector<std::vector<Tokens>>& streams,
                                int max_n = 4, bool smoothing = false);

// (substitutions + deletions + insertions) / total reference tokens, summed
// over the corpus, via unit-cost edit distance.
ScoreReport wer(const std::vector<Tokens>& hyps,
                const std::vector<Tokens>& refs);

Tokens split_tokens(const std::string& line);

}  // namespace phonest

#endif  // PHONEST_METRICS_H_
