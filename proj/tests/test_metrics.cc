// tests/test_metrics.cc

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

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "phonest/common.h"
#include "phonest/metrics.h"
#include "phonest/rng.h"

using namespace phonest;

namespace {

// Independent reference implementation: per-segment, assembles n-grams as
// token vectors and counts by linear scan. Slow and obvious on purpose.
double oracle_bleu(const std::vector<Tokens>& hyps,
                   const std::vector<std::vector<Tokens>>& refsets, int max_n) {
  double hyp_len = 0, ref_len = 0;
  std::vector<double> clip(static_cast<size_t>(max_n), 0.0);
  std::vector<double> tot(static_cast<size_t>(max_n), 0.0);
  for (size_t s = 0; s < hyps.size(); ++s) {
    const Tokens& h = hyps[s];
    hyp_len += static_cast<double>(h.size());
    double best_len = -1, best_dist = 1e18;
    for (const Tokens& r : refsets[s]) {
      double d = std::abs(static_cast<double>(r.size()) -
                          static_cast<double>(h.size()));
      if (d < best_dist ||
          (d == best_dist && static_cast<double>(r.size()) < best_len)) {
        best_dist = d;
        best_len = static_cast<double>(r.size());
      }
    }
    ref_len += best_len;
    for (int n = 1; n <= max_n; ++n) {
      auto grams = [&](const Tokens& t) {
        std::vector<Tokens> g;
        for (size_t i = 0; i + static_cast<size_t>(n) <= t.size(); ++i)
          g.emplace_back(t.begin() + static_cast<long>(i),
                         t.begin() + static_cast<long>(i) + n);
        return g;
      };
      std::vector<Tokens> hg = grams(h);
      std::vector<Tokens> uniq;
      for (const auto& g : hg)
        if (std::find(uniq.begin(), uniq.end(), g) == uniq.end())
          uniq.push_back(g);
      for (const auto& g : uniq) {
        auto count_in = [&](const std::vector<Tokens>& v) {
          return static_cast<double>(std::count(v.begin(), v.end(), g));
        };
        double c_hyp = count_in(hg);
        double c_ref = 0;
        for (const Tokens& r : refsets[s]) {
          auto rg = grams(r);
          c_ref = std::max(c_ref, count_in(rg));
        }
        clip[n - 1] += std::min(c_hyp, c_ref);
        tot[n - 1] += c_hyp;
      }
    }
  }
  double logsum = 0;
  int included = 0;
  for (int n = 0; n < max_n; ++n) {
    if (tot[n] == 0) continue;  // no n-grams of this order anywhere
    if (clip[n] == 0) return 0.0;
    logsum += std::log(clip[n] / tot[n]);
    ++included;
  }
  double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  if (hyp_len == 0 || included == 0) return 0.0;
  return 100.0 * bp * std::exp(logsum / included);
}

Tokens toks(const std::string& s) { return split_tokens(s); }

}  // namespace

TEST_CASE("bleu: identity scores 100") {
  std::vector<Tokens> hyp = {toks("the cat sat"), toks("a b")};
  std::vector<std::vector<Tokens>> refs = {{toks("the cat sat")}, {toks("a b")}};
  CHECK(corpus_bleu(hyp, refs).value == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("bleu: brevity penalty hand example") {
  std::vector<Tokens> hyp = {toks("a b c d")};
  std::vector<std::vector<Tokens>> refs = {{toks("a b c d e")}};
  ScoreReport r = corpus_bleu(hyp, refs);
  for (double p : r.precisions) CHECK(p == doctest::Approx(1.0));
  CHECK(r.brevity_penalty == doctest::Approx(std::exp(1.0 - 5.0 / 4.0)));
  CHECK(r.value == doctest::Approx(77.8800783).epsilon(1e-5));
}

TEST_CASE("bleu: clipping and closest-length tie rule") {
  // hyp "a a", refs {"a", "a a a"}: clip 2 against max ref count 3, lengths
  // 1 and 3 tie at distance 1 -> shorter (1), so BP = 1 and the score is 100.
  std::vector<Tokens> hyp = {toks("a a")};
  std::vector<std::vector<Tokens>> refs = {{toks("a"), toks("a a a")}};
  ScoreReport r = corpus_bleu(hyp, refs, /*max_n=*/1);
  CHECK(r.precisions[0] == doctest::Approx(1.0));
  CHECK(r.ref_tokens == 1);
  CHECK(r.brevity_penalty == doctest::Approx(1.0));
  CHECK(r.value == doctest::Approx(100.0));

  // Against only "a": clip at 1 -> p1 = 0.5.
  std::vector<std::vector<Tokens>> one = {{toks("a")}};
  CHECK(corpus_bleu(hyp, one, 1).precisions[0] == doctest::Approx(0.5));
}

TEST_CASE("bleu: zero precision yields 0 unless smoothing") {
  std::vector<Tokens> hyp = {toks("x y")};
  std::vector<std::vector<Tokens>> refs = {{toks("x z")}};  // no matching bigram
  ScoreReport hard = corpus_bleu(hyp, refs, 4);
  CHECK(hard.value == 0.0);
  ScoreReport soft = corpus_bleu(hyp, refs, 4, /*smoothing=*/true);
  CHECK(soft.value > 0.0);
  // Add-1 applies to n >= 2 only; p1 stays untouched.
  CHECK(soft.precisions[0] == doctest::Approx(0.5));
  CHECK(soft.precisions[1] == doctest::Approx(1.0 / 2.0));  // (0+1)/(1+1)
}

TEST_CASE("bleu: permutation invariance and oracle agreement") {
  Rng rng(300);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Tokens> hyps;
    std::vector<std::vector<Tokens>> refs;
    const int segs = static_cast<int>(rng.uniform_int(1, 4));
    auto random_sentence = [&] {
      Tokens t;
      const int len = static_cast<int>(rng.uniform_int(1, 8));
      for (int i = 0; i < len; ++i)
        t.push_back(alphabet[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(alphabet.size()) - 1))]);
      return t;
    };
    for (int s = 0; s < segs; ++s) {
      hyps.push_back(random_sentence());
      std::vector<Tokens> set;
      const int k = static_cast<int>(rng.uniform_int(1, 3));
      for (int i = 0; i < k; ++i) set.push_back(random_sentence());
      refs.push_back(set);
    }
    ScoreReport mine = corpus_bleu(hyps, refs, 3);
    CHECK(mine.value ==
          doctest::Approx(oracle_bleu(hyps, refs, 3)).epsilon(1e-9));

    // Reversing the segment order must not change the score.
    std::vector<Tokens> rh(hyps.rbegin(), hyps.rend());
    std::vector<std::vector<Tokens>> rr(refs.rbegin(), refs.rend());
    CHECK(corpus_bleu(rh, rr, 3).value == doctest::Approx(mine.value));

    // Adding a reference to every set never decreases the score.
    std::vector<std::vector<Tokens>> wider = refs;
    for (auto& set : wider) set.push_back(random_sentence());
    CHECK(corpus_bleu(hyps, wider, 3).value >= mine.value - 1e-9);
  }
}

TEST_CASE("bleu: contract errors") {
  std::vector<Tokens> hyp = {toks("a")};
  CHECK_THROWS_AS(corpus_bleu(hyp, {}), ContractError);
  CHECK_THROWS_AS(corpus_bleu(hyp, {{}}), ContractError);
}

TEST_CASE("avg single-ref bleu: identity and mean") {
  std::vector<Tokens> hyp = {toks("a b"), toks("c d")};
  std::vector<std::vector<Tokens>> same = {{toks("a b"), toks("c d")},
                                           {toks("a b"), toks("c d")}};
  CHECK(avg_single_ref_bleu(hyp, same).value == doctest::Approx(100.0));

  // Stream 1 matches exactly; stream 2 shares only unigrams at equal length.
  std::vector<Tokens> h2 = {toks("a b")};
  std::vector<std::vector<Tokens>> streams = {{toks("a b")}, {toks("a c")}};
  ScoreReport r = avg_single_ref_bleu(h2, streams, /*max_n=*/1);
  double s1 = corpus_bleu(h2, {{toks("a b")}}, 1).value;
  double s2 = corpus_bleu(h2, {{toks("a c")}}, 1).value;
  CHECK(s1 == doctest::Approx(100.0));
  CHECK(s2 == doctest::Approx(50.0));
  CHECK(r.value == doctest::Approx((s1 + s2) / 2.0));

  CHECK_THROWS_AS(avg_single_ref_bleu(h2, {{toks("a"), toks("b")}}),
                  ContractError);
}

TEST_CASE("wer: hand examples") {
  CHECK(wer({toks("a b c")}, {toks("a b c")}).value == doctest::Approx(0.0));
  CHECK(wer({toks("a x c")}, {toks("a b c")}).value ==
        doctest::Approx(1.0 / 3.0));
  CHECK(wer({toks("")}, {toks("a b c")}).value == doctest::Approx(1.0));
  // Insertions can push WER above 1.
  CHECK(wer({toks("x y z w")}, {toks("a")}).value > 1.0);
  // Swapped single-token substitutions cost the same in both directions.
  CHECK(wer({toks("a b")}, {toks("a c")}).value ==
        doctest::Approx(wer({toks("a c")}, {toks("a b")}).value));
  CHECK_THROWS_AS(wer({toks("a")}, {toks("")}), ContractError);
  CHECK_THROWS_AS(wer({toks("a")}, {toks("a"), toks("b")}), ContractError);
}

TEST_CASE("score report serializes") {
  ScoreReport r = corpus_bleu({toks("a b c d")}, {{toks("a b c d e")}});
  nlohmann::json j = r.to_json();
  CHECK(j["metric"] == "bleu");
  CHECK(j["value"].get<double>() == doctest::Approx(77.88).epsilon(1e-3));
  CHECK(j["precisions"].size() == 4);
  std::string row = r.tsv_row();
  CHECK(row.find("bleu\t") == 0);
}
