// decoder.cc

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

#include "phonest/decoder.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "phonest/textpipe.h"

namespace phonest {
namespace {

struct Candidate {
  double lp = 0.0;
  int parent = -1;
  int token = -1;
  std::vector<int> seq;
};

bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.lp != b.lp) return a.lp > b.lp;
  return a.seq < b.seq;
}

bool hyp_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

EncodedBatch tile_encoded(const EncodedBatch& enc, int b) {
  if (b == enc.batch) return enc;
  EncodedBatch out;
  std::vector<int> idx(static_cast<size_t>(enc.steps) * b);
  for (int t = 0; t < enc.steps; ++t) {
    for (int j = 0; j < b; ++j) idx[static_cast<size_t>(t) * b + j] = t;
  }
  out.states = rows(enc.states, idx);
  if (enc.proj.defined()) out.proj = rows(enc.proj, idx);
  out.valid.assign(b, enc.valid[0]);
  out.steps = enc.steps;
  out.batch = b;
  return out;
}

DecoderState gather_state(const DecoderState& s, const std::vector<int>& idx) {
  DecoderState out;
  out.h.reserve(s.h.size());
  out.c.reserve(s.c.size());
  for (const Tensor& h : s.h) out.h.push_back(rows(h, idx));
  for (const Tensor& c : s.c) out.c.push_back(rows(c, idx));
  out.ctx = rows(s.ctx, idx);
  return out;
}

// A live hypothesis can only improve its normalized score by growing the
// denominator; future log-probabilities are never positive.
double live_bound(double lp, int max_len, double alpha) {
  if (lp < 0.0) return lp / std::pow(static_cast<double>(max_len), alpha);
  return lp;
}

}  // namespace

void BeamConfig::validate() const {
  if (beam < 1) throw ParamError("beam must be >= 1, got " + std::to_string(beam));
  if (!(alpha >= 0.0))
    throw ParamError("alpha must be >= 0, got " + std::to_string(alpha));
  if (max_len < 0)
    throw ParamError("max_len must be >= 0, got " + std::to_string(max_len));
  if (nbest < 1)
    throw ParamError("nbest must be >= 1, got " + std::to_string(nbest));
}

double norm_score(double logprob, int length, double alpha) {
  if (length < 1)
    throw ContractError("norm_score: length must be >= 1, got " +
                        std::to_string(length));
  return logprob / std::pow(static_cast<double>(length), alpha);
}

BeamResult beam_search(Seq2SeqModel* model, const SourceInput& source,
                       const BeamConfig& cfg) {
  cfg.validate();
  if (model->dims().tgt_vocab <= BpeModel::kEosId)
    throw ContractError("beam_search: target vocabulary has no eos slot");
  NoGradGuard guard;
  Rng rng(0);  // eval-mode decode never draws

  std::vector<const SourceInput*> one = {&source};
  EncodedBatch enc1 = model->encode(one, Mode::kEval, &rng);
  model->cache_attention_proj(&enc1);

  BeamResult result;
  result.max_len = cfg.max_len > 0 ? cfg.max_len : 2 * enc1.steps + 10;
  const int max_len = result.max_len;
  const int vocab = model->dims().tgt_vocab;

  struct Live {
    std::vector<int> tokens;
    double lp = 0.0;
  };
  std::vector<Live> live(1);
  DecoderState state = model->initial_state(1);
  std::vector<Hypothesis> finished;
  double best_finished = 0.0;
  Hypothesis fallback;
  bool have_fallback = false;

  for (int len = 1; len <= max_len && !live.empty(); ++len) {
    EncodedBatch enc = tile_encoded(enc1, static_cast<int>(live.size()));
    std::vector<int> prev(live.size());
    for (size_t b = 0; b < live.size(); ++b) {
      prev[b] = live[b].tokens.empty() ? BpeModel::kBosId : live[b].tokens.back();
    }
    auto [logits, next] = model->decode_step(prev, state, enc, Mode::kEval, &rng);
    Tensor logp_t = log_softmax_rows(logits);
    const Matrix& logp = logp_t.value();

    std::vector<Candidate> cands;
    cands.reserve(live.size() * static_cast<size_t>(vocab));
    for (size_t b = 0; b < live.size(); ++b) {
      for (int v = 0; v < vocab; ++v) {
        if (v == BpeModel::kPadId || v == BpeModel::kBosId) continue;
        Candidate c;
        c.lp = live[b].lp + logp(static_cast<Eigen::Index>(b), v);
        c.parent = static_cast<int>(b);
        c.token = v;
        c.seq = live[b].tokens;
        c.seq.push_back(v);
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(), candidate_before);

    std::vector<Live> next_live;
    std::vector<int> keep_parent;
    size_t keep = std::min<size_t>(cfg.beam, cands.size());
    for (size_t i = 0; i < keep; ++i) {
      Candidate& c = cands[i];
      if (c.token == BpeModel::kEosId) {
        Hypothesis h;
        h.tokens = std::move(c.seq);
        h.logprob = c.lp;
        h.score = norm_score(c.lp, len, cfg.alpha);
        h.finished = true;
        if (finished.empty() || h.score > best_finished)
          best_finished = h.score;
        finished.push_back(std::move(h));
      } else {
        next_live.push_back({std::move(c.seq), c.lp});
        keep_parent.push_back(c.parent);
      }
    }

    if (len == max_len) {
      if (!next_live.empty()) {
        fallback.tokens = next_live[0].tokens;
        fallback.logprob = next_live[0].lp;
      } else {
        for (size_t i = keep; i < cands.size(); ++i) {
          if (cands[i].token == BpeModel::kEosId) continue;
          fallback.tokens = cands[i].seq;
          fallback.logprob = cands[i].lp;
          break;
        }
      }
      if (!fallback.tokens.empty()) {
        fallback.score = norm_score(fallback.logprob, len, cfg.alpha);
        fallback.finished = false;
        have_fallback = true;
      }
      break;
    }

    live = std::move(next_live);
    if (!live.empty()) state = gather_state(next, keep_parent);

    if (!finished.empty() && !live.empty()) {
      double best_lp = live[0].lp;
      for (const Live& l : live) best_lp = std::max(best_lp, l.lp);
      if (best_finished > live_bound(best_lp, max_len, cfg.alpha)) break;
    }
  }

  if (!finished.empty()) {
    std::sort(finished.begin(), finished.end(), hyp_before);
    result.best = finished[0];
    size_t n = std::min<size_t>(cfg.nbest, finished.size());
    result.nbest.assign(finished.begin(), finished.begin() + n);
  } else {
    if (!have_fallback)
      throw ContractError("beam_search: no hypothesis produced");
    result.best = fallback;
    result.nbest = {fallback};
    result.max_len_hit = true;
  }
  return result;
}

Hypothesis greedy_decode(Seq2SeqModel* model, const SourceInput& source,
                         int max_len, double alpha) {
  if (model->dims().tgt_vocab <= BpeModel::kEosId)
    throw ContractError("greedy_decode: target vocabulary has no eos slot");
  NoGradGuard guard;
  Rng rng(0);

  std::vector<const SourceInput*> one = {&source};
  EncodedBatch enc = model->encode(one, Mode::kEval, &rng);
  model->cache_attention_proj(&enc);
  if (max_len <= 0) max_len = 2 * enc.steps + 10;
  const int vocab = model->dims().tgt_vocab;

  Hypothesis hyp;
  DecoderState state = model->initial_state(1);
  for (int len = 1; len <= max_len; ++len) {
    int prev = hyp.tokens.empty() ? BpeModel::kBosId : hyp.tokens.back();
    auto [logits, next] = model->decode_step({prev}, state, enc, Mode::kEval, &rng);
    Tensor logp_t = log_softmax_rows(logits);
    const Matrix& logp = logp_t.value();
    int arg = -1;
    for (int v = 0; v < vocab; ++v) {
      if (v == BpeModel::kPadId || v == BpeModel::kBosId) continue;
      if (arg < 0 || logp(0, v) > logp(0, arg)) arg = v;
    }
    hyp.tokens.push_back(arg);
    hyp.logprob += logp(0, arg);
    if (arg == BpeModel::kEosId) {
      hyp.finished = true;
      break;
    }
    state = next;
  }
  hyp.score = norm_score(hyp.logprob, static_cast<int>(hyp.tokens.size()), alpha);
  return hyp;
}

CascadeResult cascade_translate(Seq2SeqModel* stage1, Seq2SeqModel* stage2,
                                const Matrix& feats, const BeamConfig& beam1,
                                const BeamConfig& beam2) {
  beam1.validate();
  beam2.validate();
  CascadeResult out;

  SourceInput src1;
  src1.feats = feats;
  out.stage1 = beam_search(stage1, src1, beam1);

  out.intermediate = out.stage1.best.tokens;
  if (out.stage1.best.finished) out.intermediate.pop_back();

  if (out.intermediate.empty()) {
    out.degenerate = true;
    Hypothesis h;
    h.tokens = {BpeModel::kEosId};
    h.logprob = 0.0;
    h.score = norm_score(0.0, 1, beam2.alpha);
    h.finished = true;
    out.stage2.best = h;
    out.stage2.nbest = {h};
    return out;
  }

  SourceInput src2;
  src2.tokens = out.intermediate;
  out.stage2 = beam_search(stage2, src2, beam2);
  return out;
}

}  // namespace phonest
