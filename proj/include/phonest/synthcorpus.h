// phonest/synthcorpus.h

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

// Deterministic synthetic phone-grounded parallel corpus: features, gold
// frame alignments, transcripts, and translations.

#ifndef PHONEST_SYNTHCORPUS_H_
#define PHONEST_SYNTHCORPUS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "phonest/phonesup.h"

namespace phonest {

struct SynthConfig {
  int n_phones = 30;  // excluding silence
  int feat_dim = 40;
  int lexicon_size = 50;
  int min_word_phones = 2;
  int max_word_phones = 4;
  int min_words = 3;
  int max_words = 8;
  int min_dur = 3;  // frames per phone or silence segment
  int max_dur = 7;
  double noise_sigma = 0.3;
  int coart_width = 2;  // coarticulation blend width in frames
  double reorder_prob = 0.3;
  int n_train = 2000;
  int n_dev = 200;
  int n_test = 200;
  int n_speakers = 8;
  std::uint64_t seed = 17;

  void validate() const;  // ParamError on inconsistent fields
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct Utterance {
  std::string id;
  std::string speaker;
  Matrix feats;  // T x feat_dim
  PhoneAlignment alignment;
  std::vector<std::string> src_words;
  std::vector<std::string> tgt_words;  // one synthetic reference
};

struct SynthCorpus {
  SynthConfig config;
  PhoneInventory inventory;  // silence at id 0
  Matrix prototypes;         // inventory.size() x feat_dim, silence row zero
  std::vector<std::vector<int>> lexicon;  // word index -> phone ids
  std::vector<std::string> src_vocab;     // word strings
  std::vector<std::string> tgt_vocab;     // target token strings, bijective
  std::vector<Utterance> train, dev, test;
};

SynthCorpus generate(const SynthConfig& config);

// The swap decision for the adjacent source pair (a, b): fixed per word-id
// pair given the corpus seed, so stored targets can be re-derived.
bool swap_decision(std::uint64_t seed, double reorder_prob, int word_a, int word_b);

// Applies the lexicon and the pairwise swap decisions to a source word-id
// sequence; generate() stores exactly this output as the target.
std::vector<std::string> target_of(const SynthCorpus& corpus,
                                   const std::vector<int>& word_ids);

// Keeps a seeded-shuffle prefix of the train split (dev/test untouched).
// Fractions give an exact count; hours are mapped at 100 frames/second and
// keep the smallest prefix reaching the requested amount.
void subset_train_fraction(SynthCorpus* corpus, double fraction, std::uint64_t seed);
void subset_train_hours(SynthCorpus* corpus, double hours, std::uint64_t seed);

double corpus_hours(const std::vector<Utterance>& utts);

// Writes <split>.feats.jsonl, <split>.align.tsv, <split>.src.txt,
// <split>.ref0.txt for each split plus corpus.json (config, inventory,
// prototypes, lexicon, vocabularies).
void emit_corpus(const SynthCorpus& corpus, const std::string& out_dir);

// Reads back what emit_corpus wrote. Feature matrices and alignments are
// reloaded per split; corpus.json restores the generation tables.
SynthCorpus load_corpus(const std::string& dir);

std::vector<FeatureMatrix> corpus_features(const std::vector<Utterance>& utts);

}  // namespace phonest

#endif  // PHONEST_SYNTHCORPUS_H_
