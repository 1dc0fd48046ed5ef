// phonest/textpipe.h

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

// Text normalization and byte-pair encoding for transcripts and translations.

#ifndef PHONEST_TEXTPIPE_H_
#define PHONEST_TEXTPIPE_H_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace phonest {

std::vector<uint32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<uint32_t>& cps);

// Lowercases, removes punctuation except the apostrophe (U+2019 is first
// normalized to U+0027), collapses whitespace and trims. The punctuation and
// case tables cover ASCII, Latin-1, Latin Extended-A, general punctuation and
// the common CJK/fullwidth marks; that is the full range the toolkit's data
// can contain. Idempotent.
std::string normalize(const std::string& text);

// Classic BPE learned over words terminated with an end-of-word symbol.
// Emitted subword tokens carry the continuation marker "@@" on every
// non-final piece of a word; the final piece is bare.
class BpeModel {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kBosId = 1;
  static constexpr int kEosId = 2;
  static constexpr int kUnkId = 3;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kBosToken = "<s>";
  static constexpr const char* kEosToken = "</s>";
  static constexpr const char* kUnkToken = "<unk>";
  static constexpr const char* kEndOfWord = "</w>";
  static constexpr const char* kContinuation = "@@";

  // Surface subword tokens for one word; merges replay in learned order,
  // characters outside the training alphabet become <unk>. Never longer
  // than the word's character count.
  std::vector<std::string> apply_word(const std::string& word) const;
  // Whitespace-splits the line and concatenates the per-word pieces.
  std::vector<std::string> apply_line(const std::string& line) const;

  int token_id(const std::string& token) const;  // kUnkId when absent
  std::vector<int> encode_line(const std::string& line) const;

  int vocab_size() const { return static_cast<int>(id_to_token_.size()); }
  const std::string& token(int id) const;
  const std::vector<std::pair<std::string, std::string>>& merges() const {
    return merges_;
  }

  // Merge file: version header line, then one merge per line ("left right").
  // Vocab file: one "subword<TAB>id" per line.
  void save(const std::string& merges_path,
            const std::string& vocab_path) const;
  static BpeModel load(const std::string& merges_path,
                       const std::string& vocab_path);

 private:
  friend BpeModel bpe_learn(const std::vector<std::string>& corpus,
                            int n_merges);
  void build_vocab();

  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, std::string> merged_;  // "a\x1fb" -> "ab"
  std::unordered_map<std::string, int> vocab_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, bool> alphabet_;  // single chars seen
};

// Greedy most-frequent-pair merging over the (already normalized) corpus
// lines; ties break to the lexicographically smallest pair; stops early when
// no pair occurs twice.
BpeModel bpe_learn(const std::vector<std::string>& corpus, int n_merges = 1000);

// Strips continuation markers and rejoins words with single spaces.
std::string bpe_decode(const std::vector<std::string>& subwords);

}  // namespace phonest

#endif  // PHONEST_TEXTPIPE_H_
