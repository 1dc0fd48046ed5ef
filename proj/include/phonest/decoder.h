// phonest/decoder.h

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

// Beam-search decoding with length normalization, and two-stage cascade
// translation over a read-only model snapshot.

#ifndef PHONEST_DECODER_H_
#define PHONEST_DECODER_H_

#include <utility>
#include <vector>

#include "phonest/common.h"
#include "phonest/stmodel.h"

namespace phonest {

struct BeamConfig {
  int beam = 15;
  double alpha = 1.5;  // length-normalization exponent
  int max_len = 0;     // 0 picks 2 * encoder output length + 10
  int nbest = 1;

  void validate() const;
};

struct Hypothesis {
  std::vector<int> tokens;  // excludes bos; ends with eos when finished
  double logprob = 0.0;
  double score = 0.0;  // logprob / len^alpha
  bool finished = false;
  int state_row = -1;  // live-set row while searching, -1 once finished
};

struct BeamResult {
  Hypothesis best;
  std::vector<Hypothesis> nbest;  // score-sorted, at most cfg.nbest
  bool max_len_hit = false;       // best is an unfinished fallback
  int max_len = 0;
};

// logprob / length^alpha. Zero length is a ContractError.
double norm_score(double logprob, int length, double alpha = 1.5);

// Standard beam expansion with a shrinking live set: the top `beam`
// candidates of a step are split into finished (eos) and live (everything
// else), so width 1 degenerates to greedy decoding. At the last permitted
// step every eos candidate joins the finished set, since nothing else can
// terminate any more. Search stops when the best finished score strictly
// exceeds every live hypothesis's optimistic bound, or at max_len. pad and
// bos are never expanded.
BeamResult beam_search(Seq2SeqModel* model, const SourceInput& source,
                       const BeamConfig& cfg = {});

// Argmax loop, smallest token id on ties; unfinished at max_len is returned
// with finished = false.
Hypothesis greedy_decode(Seq2SeqModel* model, const SourceInput& source,
                         int max_len = 0, double alpha = 1.5);

struct CascadeResult {
  BeamResult stage1, stage2;
  std::vector<int> intermediate;  // stage1 1-best without the trailing eos
  bool degenerate = false;        // empty intermediate, stage2 skipped
};

// stage1 decodes features to tokens, its 1-best feeds stage2 as source
// tokens. stage1's target vocabulary must be stage2's source vocabulary.
// An empty intermediate yields an eos-only translation flagged degenerate.
CascadeResult cascade_translate(Seq2SeqModel* stage1, Seq2SeqModel* stage2,
                                const Matrix& feats,
                                const BeamConfig& beam1 = {},
                                const BeamConfig& beam2 = {});

}  // namespace phonest

#endif  // PHONEST_DECODER_H_
