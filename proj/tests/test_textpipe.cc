// tests/test_textpipe.cc

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

#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "phonest/checkpoint.h"
#include "phonest/common.h"
#include "phonest/rng.h"
#include "phonest/textpipe.h"

using namespace phonest;

TEST_CASE("normalize: rule application") {
  CHECK(normalize("Hello, World!") == "hello world");
  CHECK(normalize("don't STOP.") == "don't stop");
  CHECK(normalize("¿Qué pasó?") == "qué pasó");
  CHECK(normalize("  a\t\tb \n c  ") == "a b c");
  CHECK(normalize("semi;colon--dash—em") == "semicolondashem");
  // Curly apostrophe U+2019 becomes the plain one and survives.
  CHECK(normalize("don’t") == "don't");
  CHECK(normalize("") == "");
  CHECK(normalize("!!!") == "");
}

TEST_CASE("normalize: idempotent") {
  std::vector<std::string> cases = {
      "Hello, World!", "don’t STOP.", "¿Qué pasó?",
      "MiXeD CaSe 123", "“quoted” text…", "  spaces   tabs\t",
      "Łódź POLAND", "café à la carte"};
  for (const auto& c : cases) {
    std::string once = normalize(c);
    CHECK(normalize(once) == once);
  }
}

TEST_CASE("normalize: invalid utf-8 rejected") {
  std::string bad = "ab";
  bad += static_cast<char>(0xC3);  // lead byte with no continuation
  CHECK_THROWS_AS(normalize(bad), ParseError);
}

TEST_CASE("bpe: hand-counted first merge") {
  // "aaab" twice: pair (a,a) occurs 4 times, (a,b) twice.
  BpeModel m = bpe_learn({"aaab aaab"}, 1);
  REQUIRE(m.merges().size() == 1);
  CHECK(m.merges()[0].first == "a");
  CHECK(m.merges()[0].second == "a");
}

TEST_CASE("bpe: zero merges segments into characters") {
  BpeModel m = bpe_learn({"abc ab"}, 0);
  auto pieces = m.apply_word("abc");
  REQUIRE(pieces.size() == 3);
  CHECK(pieces[0] == "a@@");
  CHECK(pieces[1] == "b@@");
  CHECK(pieces[2] == "c");
}

TEST_CASE("bpe: learning is deterministic") {
  std::vector<std::string> corpus = {"the cat sat on the mat",
                                     "the dog sat on the log",
                                     "a cat and a dog"};
  BpeModel a = bpe_learn(corpus, 50);
  BpeModel b = bpe_learn(corpus, 50);
  CHECK(a.merges() == b.merges());
  CHECK(a.vocab_size() == b.vocab_size());
  for (int i = 0; i < a.vocab_size(); ++i) CHECK(a.token(i) == b.token(i));
}

TEST_CASE("bpe: merge replay hand example") {
  // Learn exactly [("a","a"), ("aa","b")] and replay on "aab".
  BpeModel m = bpe_learn({"aab aab aab"}, 2);
  REQUIRE(m.merges().size() == 2);
  CHECK(m.merges()[0] == std::pair<std::string, std::string>("a", "a"));
  CHECK(m.merges()[1] == std::pair<std::string, std::string>("aa", "b"));
  auto pieces = m.apply_word("aab");
  REQUIRE(pieces.size() == 1);
  CHECK(pieces[0] == "aab");

  CHECK(m.apply_word("").empty());
}

TEST_CASE("bpe: piece count never exceeds character count") {
  std::vector<std::string> corpus = {"abracadabra alakazam", "banana bandana"};
  BpeModel m = bpe_learn(corpus, 30);
  for (const std::string& w :
       {"abracadabra", "banana", "bandanana", "zzz", "a"}) {
    auto pieces = m.apply_word(w);
    CHECK(pieces.size() <= w.size());
  }
}

TEST_CASE("bpe: round-trip on random in-vocabulary words") {
  std::vector<std::string> corpus = {"banana band bandana nanab anad",
                                     "dad nab ban and band"};
  BpeModel m = bpe_learn(corpus, 40);
  Rng rng(400);
  const std::string alpha = "abdn";
  for (int i = 0; i < 1000; ++i) {
    const int len = static_cast<int>(rng.uniform_int(1, 12));
    std::string w;
    for (int k = 0; k < len; ++k)
      w += alpha[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(alpha.size()) - 1))];
    CHECK(bpe_decode(m.apply_word(w)) == w);
  }
  // Line-level round trip, multiple words.
  CHECK(bpe_decode(m.apply_line("banana band dad")) == "banana band dad");
}

TEST_CASE("bpe: unknown characters become unk") {
  BpeModel m = bpe_learn({"abc abc"}, 5);
  auto pieces = m.apply_word("axc");
  bool has_unk = false;
  for (const auto& p : pieces)
    if (p == BpeModel::kUnkToken || p == std::string(BpeModel::kUnkToken) + "@@")
      has_unk = true;
  CHECK(has_unk);
  CHECK(m.token_id("never-seen-token") == BpeModel::kUnkId);
  CHECK(m.token_id(BpeModel::kPadToken) == BpeModel::kPadId);
  CHECK(m.token_id(BpeModel::kEosToken) == BpeModel::kEosId);
}

TEST_CASE("bpe: vocabulary covers single chars and merge products") {
  BpeModel m = bpe_learn({"aab aab aab"}, 2);
  CHECK(m.token_id("a") != BpeModel::kUnkId);
  CHECK(m.token_id("b") != BpeModel::kUnkId);
  CHECK(m.token_id("a@@") != BpeModel::kUnkId);
  CHECK(m.token_id("aa@@") != BpeModel::kUnkId);  // product of merge 1
  CHECK(m.token_id("aab") != BpeModel::kUnkId);   // product of merge 2
  // Specials are reserved and distinct.
  CHECK(m.token(0) == BpeModel::kPadToken);
  CHECK(m.token(1) == BpeModel::kBosToken);
  CHECK(m.token(2) == BpeModel::kEosToken);
  CHECK(m.token(3) == BpeModel::kUnkToken);
}

TEST_CASE("bpe: empty corpus is a parameter error") {
  CHECK_THROWS_AS(bpe_learn({}, 10), ParamError);
  CHECK_THROWS_AS(bpe_learn({"   ", ""}, 10), ParamError);
}

TEST_CASE("bpe: save and load round-trip") {
  std::vector<std::string> corpus = {"the cat sat on the mat",
                                     "a cat and a bat"};
  BpeModel m = bpe_learn(corpus, 25);
  auto dir = std::filesystem::temp_directory_path();
  std::string mp = (dir / "phonest_test_merges.txt").string();
  std::string vp = (dir / "phonest_test_vocab.tsv").string();
  m.save(mp, vp);
  BpeModel back = BpeModel::load(mp, vp);
  CHECK(back.merges() == m.merges());
  CHECK(back.vocab_size() == m.vocab_size());
  for (const std::string& line : corpus) {
    CHECK(back.apply_line(line) == m.apply_line(line));
    CHECK(back.encode_line(line) == m.encode_line(line));
  }
  CHECK(back.apply_word("catbat") == m.apply_word("catbat"));

  write_file_atomic(mp, "wrong header\na b\n");
  CHECK_THROWS_AS(BpeModel::load(mp, vp), ParseError);
  std::filesystem::remove(mp);
  std::filesystem::remove(vp);
}
