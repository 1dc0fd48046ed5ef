// tests/decode_oracle.h

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

// Exhaustive-enumeration decoding oracle for toy models, shared between the
// decoder unit tests and the acceptance suite.

#ifndef PHONEST_TESTS_DECODE_ORACLE_H_
#define PHONEST_TESTS_DECODE_ORACLE_H_

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "phonest/decoder.h"
#include "phonest/stmodel.h"
#include "phonest/textpipe.h"

namespace phonest {
namespace testing {

// Small token-to-token model with a spread-out output distribution. With
// tgt_vocab = 5 three tokens are expandable (eos, unk, one content id);
// with tgt_vocab = 4 only two are.
inline Seq2SeqModel make_toy_model(std::uint64_t seed, int tgt_vocab,
                                   int src_vocab = 6, double out_scale = 8.0) {
  ArchConfig cfg;
  cfg.hidden = 3;
  cfg.enc_layers = 2;
  cfg.downsample_after = {1};
  cfg.attn_units = 2;
  cfg.dec_layers = 1;
  cfg.embed_dim = 2;
  cfg.dropout = 0.0;
  cfg.embed_dropout = 0.0;
  cfg.label_smoothing = 0.0;
  ModelDims dims;
  dims.src_vocab = src_vocab;
  dims.tgt_vocab = tgt_vocab;
  Rng rng(seed);
  Seq2SeqModel model(variant_by_tag("mt_over_text"), cfg, dims, &rng);
  for (auto& [name, t] : model.named_parameters()) {
    if (name == "out.w") t.mutable_value() *= out_scale;
  }
  return model;
}

// Every eos-terminated hypothesis of at most max_len tokens, scored by
// teacher-forced stepping and sorted best first (score descending, then
// lexicographically smallest token sequence).
inline std::vector<Hypothesis> enumerate_finished(Seq2SeqModel* model,
                                                  const SourceInput& source,
                                                  int max_len,
                                                  double alpha = 1.5) {
  NoGradGuard guard;
  Rng rng(0);
  std::vector<const SourceInput*> one = {&source};
  EncodedBatch enc = model->encode(one, Mode::kEval, &rng);
  model->cache_attention_proj(&enc);
  const int vocab = model->dims().tgt_vocab;

  struct Node {
    std::vector<int> prefix;
    double lp = 0.0;
    DecoderState state;
    int prev = BpeModel::kBosId;
  };
  std::vector<Node> stack;
  stack.push_back({{}, 0.0, model->initial_state(1), BpeModel::kBosId});

  std::vector<Hypothesis> out;
  while (!stack.empty()) {
    Node n = std::move(stack.back());
    stack.pop_back();
    auto [logits, next] =
        model->decode_step({n.prev}, n.state, enc, Mode::kEval, &rng);
    Tensor logp_t = log_softmax_rows(logits);
    const Matrix& logp = logp_t.value();

    Hypothesis h;
    h.tokens = n.prefix;
    h.tokens.push_back(BpeModel::kEosId);
    h.logprob = n.lp + logp(0, BpeModel::kEosId);
    h.score = norm_score(h.logprob, static_cast<int>(h.tokens.size()), alpha);
    h.finished = true;
    out.push_back(std::move(h));

    if (static_cast<int>(n.prefix.size()) + 2 <= max_len) {
      for (int v = 0; v < vocab; ++v) {
        if (v == BpeModel::kPadId || v == BpeModel::kBosId ||
            v == BpeModel::kEosId)
          continue;
        Node child;
        child.prefix = n.prefix;
        child.prefix.push_back(v);
        child.lp = n.lp + logp(0, v);
        child.state = next;
        child.prev = v;
        stack.push_back(std::move(child));
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
  return out;
}

}  // namespace testing
}  // namespace phonest

#endif  // PHONEST_TESTS_DECODE_ORACLE_H_
