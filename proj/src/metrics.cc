// phonest/metrics.cc

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

#include "phonest/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

#include "phonest/common.h"

namespace phonest {

namespace {

// n-gram key: tokens joined with a separator that cannot occur inside one.
using NgramCounts = std::map<std::string, std::int64_t>;

NgramCounts count_ngrams(const Tokens& toks, int n) {
  NgramCounts counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += toks[i + k];
    }
    counts[key]++;
  }
  return counts;
}

}  // namespace

Tokens split_tokens(const std::string& line) {
  Tokens out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

nlohmann::json ScoreReport::to_json() const {
  return nlohmann::json{{"metric", metric},
                        {"value", value},
                        {"precisions", precisions},
                        {"brevity_penalty", brevity_penalty},
                        {"hyp_tokens", hyp_tokens},
                        {"ref_tokens", ref_tokens},
                        {"max_n", max_n},
                        {"smoothing", smoothing}};
}

std::string ScoreReport::tsv_header() {
  return "metric\tvalue\tprecisions\tbrevity_penalty\thyp_tokens\tref_tokens";
}

std::string ScoreReport::tsv_row() const {
  std::ostringstream os;
  os << metric << '\t' << value << '\t';
  for (size_t i = 0; i < precisions.size(); ++i) {
    if (i) os << ',';
    os << precisions[i];
  }
  os << '\t' << brevity_penalty << '\t' << hyp_tokens << '\t' << ref_tokens;
  return os.str();
}

ScoreReport corpus_bleu(const std::vector<Tokens>& hyps,
                        const std::vector<std::vector<Tokens>>& ref_sets,
                        int max_n, bool smoothing) {
  if (max_n < 1) throw ParamError("corpus_bleu: max_n must be >= 1");
  if (hyps.size() != ref_sets.size())
    throw ContractError("corpus_bleu: " + std::to_string(hyps.size()) +
                        " hypotheses vs " + std::to_string(ref_sets.size()) +
                        " reference sets");
  for (size_t i = 0; i < ref_sets.size(); ++i)
    if (ref_sets[i].empty())
      throw ContractError("corpus_bleu: empty reference set at segment " +
                          std::to_string(i));

  std::vector<std::int64_t> clipped(static_cast<size_t>(max_n), 0);
  std::vector<std::int64_t> total(static_cast<size_t>(max_n), 0);
  std::int64_t hyp_len = 0, ref_len = 0;

  for (size_t i = 0; i < hyps.size(); ++i) {
    const Tokens& hyp = hyps[i];
    const auto& refs = ref_sets[i];
    hyp_len += static_cast<std::int64_t>(hyp.size());

    // Closest reference length; ties go to the shorter reference.
    std::int64_t best = static_cast<std::int64_t>(refs[0].size());
    for (const Tokens& r : refs) {
      auto len = static_cast<std::int64_t>(r.size());
      auto dist = [&](std::int64_t l) {
        return std::llabs(l - static_cast<std::int64_t>(hyp.size()));
      };
      if (dist(len) < dist(best) || (dist(len) == dist(best) && len < best))
        best = len;
    }
    ref_len += best;

    for (int n = 1; n <= max_n; ++n) {
      NgramCounts hyp_counts = count_ngrams(hyp, n);
      if (hyp_counts.empty()) continue;
      NgramCounts max_ref;
      for (const Tokens& r : refs)
        for (const auto& [g, c] : count_ngrams(r, n))
          max_ref[g] = std::max(max_ref[g], c);
      for (const auto& [g, c] : hyp_counts) {
        auto it = max_ref.find(g);
        clipped[n - 1] += std::min(c, it == max_ref.end() ? 0 : it->second);
        total[n - 1] += c;
      }
    }
  }

  ScoreReport rep;
  rep.metric = "bleu";
  rep.max_n = max_n;
  rep.smoothing = smoothing;
  rep.hyp_tokens = hyp_len;
  rep.ref_tokens = ref_len;
  rep.precisions.resize(static_cast<size_t>(max_n), 0.0);

  // Orders with an empty denominator (the corpus has no n-grams that long)
  // carry no evidence and are left out of the geometric mean; an identity
  // corpus of short segments still scores 100 that way. A zero NUMERATOR at
  // any included order zeroes the score unless smoothing is on.
  bool any_zero = false;
  double log_sum = 0.0;
  int included = 0;
  for (int n = 1; n <= max_n; ++n) {
    double num = static_cast<double>(clipped[n - 1]);
    double den = static_cast<double>(total[n - 1]);
    if (smoothing && n >= 2) {
      num += 1.0;
      den += 1.0;
    }
    if (den == 0.0) {
      rep.precisions[n - 1] = 0.0;
      continue;
    }
    double p = num / den;
    rep.precisions[n - 1] = p;
    ++included;
    if (p <= 0.0)
      any_zero = true;
    else
      log_sum += std::log(p);
  }

  rep.brevity_penalty =
      hyp_len == 0 ? 0.0
      : hyp_len < ref_len
          ? std::exp(1.0 - static_cast<double>(ref_len) / hyp_len)
          : 1.0;
  rep.value = (any_zero || hyp_len == 0 || included == 0)
                  ? 0.0
                  : 100.0 * rep.brevity_penalty * std::exp(log_sum / included);
  return rep;
}

ScoreReport avg_single_ref_bleu(const std::vector<Tokens>& hyps,
                                const std::vector<std::vector<Tokens>>& streams,
                                int max_n, bool smoothing) {
  if (streams.empty())
    throw ContractError("avg_single_ref_bleu: no reference streams");
  for (const auto& s : streams)
    if (s.size() != hyps.size())
      throw ContractError("avg_single_ref_bleu: stream has " +
                          std::to_string(s.size()) + " segments, expected " +
                          std::to_string(hyps.size()));
  ScoreReport rep;
  rep.metric = "avg_single_ref_bleu";
  rep.max_n = max_n;
  rep.smoothing = smoothing;
  rep.precisions.assign(static_cast<size_t>(max_n), 0.0);
  rep.brevity_penalty = 0.0;
  for (const auto& stream : streams) {
    std::vector<std::vector<Tokens>> sets;
    sets.reserve(hyps.size());
    for (const Tokens& r : stream) sets.push_back({r});
    ScoreReport one = corpus_bleu(hyps, sets, max_n, smoothing);
    rep.value += one.value;
    rep.brevity_penalty += one.brevity_penalty;
    for (int n = 0; n < max_n; ++n) rep.precisions[n] += one.precisions[n];
    rep.hyp_tokens = one.hyp_tokens;
    rep.ref_tokens += one.ref_tokens;
  }
  const double k = static_cast<double>(streams.size());
  rep.value /= k;
  rep.brevity_penalty /= k;
  for (auto& p : rep.precisions) p /= k;
  return rep;
}

ScoreReport wer(const std::vector<Tokens>& hyps,
                const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size())
    throw ContractError("wer: " + std::to_string(hyps.size()) +
                        " hypotheses vs " + std::to_string(refs.size()) +
                        " references");
  std::int64_t errors = 0, ref_tokens = 0, hyp_tokens = 0;
  for (size_t s = 0; s < hyps.size(); ++s) {
    const Tokens& h = hyps[s];
    const Tokens& r = refs[s];
    ref_tokens += static_cast<std::int64_t>(r.size());
    hyp_tokens += static_cast<std::int64_t>(h.size());
    // Unit-cost edit distance, two rolling rows.
    std::vector<std::int64_t> prev(h.size() + 1), cur(h.size() + 1);
    for (size_t j = 0; j <= h.size(); ++j) prev[j] = static_cast<std::int64_t>(j);
    for (size_t i = 1; i <= r.size(); ++i) {
      cur[0] = static_cast<std::int64_t>(i);
      for (size_t j = 1; j <= h.size(); ++j) {
        std::int64_t sub = prev[j - 1] + (r[i - 1] == h[j - 1] ? 0 : 1);
        cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
      }
      std::swap(prev, cur);
    }
    errors += prev[h.size()];
  }
  if (ref_tokens == 0)
    throw ContractError("wer: reference corpus has no tokens");
  ScoreReport rep;
  rep.metric = "wer";
  rep.value = static_cast<double>(errors) / static_cast<double>(ref_tokens);
  rep.hyp_tokens = hyp_tokens;
  rep.ref_tokens = ref_tokens;
  rep.max_n = 0;
  rep.precisions.clear();
  rep.brevity_penalty = 1.0;
  return rep;
}

}  // namespace phonest
