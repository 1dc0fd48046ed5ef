// include/phonest/trainer.h

// Copyright 2026 The Phonest Authors
//
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

#ifndef PHONEST_TRAINER_H_
#define PHONEST_TRAINER_H_

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "phonest/frontend.h"
#include "phonest/rng.h"
#include "phonest/stmodel.h"
#include "phonest/synthcorpus.h"
#include "phonest/textpipe.h"

namespace phonest {

// One training run: a model variant on one corpus condition, trained with
// Adam under a reduce-on-plateau learning rate schedule and validated by
// beam decoding after every epoch.
struct RunConfig {
  std::string variant = "baseline_e2e";
  // Either a directory previously written by emit_corpus, or empty to
  // synthesize the corpus in memory from `synth`.
  std::string corpus_dir;
  SynthConfig synth;
  std::string tier = "gold";   // phone quality tier for phone-fed variants
  bool collapse_phones = true; // mt_over_phones: run-collapsed vs frame-level
  double train_fraction = 1.0; // subset of the train split, by utterance count
  std::uint64_t seed = 1;

  ArchConfig arch;
  int bpe_merges = 120;

  int frame_budget = 6000;      // max total source frames (or tokens) per batch
  int max_source_frames = 1500; // utterances longer than this are excluded
  int max_epochs = 60;
  double initial_lr = 0.0003;
  double decay_factor = 0.5;
  int patience_initial = 10; // epochs of stagnation before the first decay
  int patience_later = 5;    // and before every later decay
  double min_lr = 1e-5;      // training stops once lr drops below this

  int val_beam = 15;
  double val_alpha = 1.5;
  int val_max_len = 0; // 0: let the decoder derive it from the input length

  std::string out_dir; // checkpoints, logs, and metrics land here

  void validate() const; // ParamError on out-of-range fields
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

// Indices are positions in the caller's utterance list. Every index with
// length <= max_source_frames appears in exactly one batch; longer ones are
// reported in `excluded`. Batches respect the frame budget on unpadded
// lengths and group similar lengths together; batch order is shuffled.
struct BatchPlan {
  std::vector<std::vector<int>> batches;
  std::vector<int> excluded;
};

BatchPlan make_batches(const std::vector<int>& lengths, int frame_budget,
                       int max_source_frames, Rng* rng);

// Reduce-on-plateau over a full validation history. Returns the learning
// rate for the next epoch: `lr * decay` exactly when the final entry of
// `history` completes a stagnation run (no strict improvement of the best
// value) of `patience_initial` epochs before the first decay, or
// `patience_later` epochs after any decay; otherwise `lr` unchanged. The
// stagnation counter resets on every decay and on every new best.
double schedule_update(const std::vector<double>& history, double lr,
                       double decay = 0.5, int patience_initial = 10,
                       int patience_later = 5);

struct EpochRecord {
  int epoch = 0; // 1-based
  double train_loss = 0.0;
  double val_bleu = 0.0;
  double lr = 0.0;
  double wall_time_s = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0; // argmax validation BLEU, ties to the earliest
  double best_val_bleu = 0.0;
  int excluded_utterances = 0;

  // One JSON object per epoch; wall time is included here and only here,
  // so every other output of a run is byte-deterministic.
  std::string to_jsonl() const;
  std::string to_tsv() const;
};

// One utterance in model form: encoder input plus target token ids
// (eos-terminated, never bos-prefixed) and the detokenized reference.
struct PreparedUtt {
  std::string id;
  SourceInput source;
  std::vector<int> target;
  std::string ref_text;
  int source_len = 0; // frames or tokens, whichever the variant consumes
};

// A corpus made consumable by one model variant: tier corruption applied,
// features speaker-normalized with train-split statistics, targets and
// token sources BPE-encoded.
struct DataBundle {
  std::string variant;
  ModelDims dims;
  BpeModel bpe_src; // learned on train transcripts; token sources and
                    // transcript targets use it
  BpeModel bpe_tgt; // learned on train translations
  std::map<std::string, SpeakerStats> cmvn;
  PhoneInventory inventory;
  std::vector<PreparedUtt> train, dev, test;
  int n_train_full = 0; // train size before train_fraction
};

// Loads (or synthesizes) the corpus and prepares all three splits.
// ConsistencyError if features and alignments disagree, before any training.
DataBundle prepare_data(const RunConfig& cfg);

// Labels after tier corruption. The stream is keyed by (corpus seed, tier
// name, utterance id) only: a tier stands for one fixed upstream recognizer,
// so run seeds never move the corrupted alignments. Gold passes through.
std::vector<int> tiered_labels(const Utterance& utt, const QualityTier& tier,
                               const SynthCorpus& corpus);

struct TrainResult {
  TrainLog log;
  double dev_bleu = 0.0;  // best epoch's validation BLEU
  double test_bleu = 0.0; // best checkpoint decoded on the test split
  int epochs_run = 0;
  std::string best_ckpt_path;
};

// Decodes every utterance with the given beam settings and scores corpus
// BLEU against the bundle's references. Hypotheses are detokenized text.
struct EvalResult {
  double bleu = 0.0;
  std::vector<std::string> hyp_texts; // aligned with the utterance list
};

EvalResult evaluate(Seq2SeqModel* model, const DataBundle& data,
                    const std::vector<PreparedUtt>& split, int beam,
                    double alpha, int max_len = 0);

// Full run: build the model, train with per-epoch validation, keep the best
// checkpoint, then decode the test split with it. Writes train_log.jsonl,
// train_log.tsv, best.ckpt.json, metrics.json, test_hyps.txt, and the BPE
// and CMVN side files under cfg.out_dir (when set). Deterministic given the
// config, up to wall-clock fields in the log.
TrainResult train_run(const RunConfig& cfg);

// As train_run, but on data the caller already prepared (shared across runs).
TrainResult train_on(const RunConfig& cfg, const DataBundle& data);

}  // namespace phonest

#endif  // PHONEST_TRAINER_H_
