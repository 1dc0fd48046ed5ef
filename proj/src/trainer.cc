// src/trainer.cc

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

#include "phonest/trainer.h"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <utility>

#include "phonest/checkpoint.h"
#include "phonest/decoder.h"
#include "phonest/metrics.h"
#include "phonest/optimizer.h"
#include "phonest/phonesup.h"

namespace phonest {

namespace {

// Phone ids shift past the reserved token ids when phones act as tokens.
constexpr int kPhoneTokenOffset = 4;

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string num(double v) { return nlohmann::json(v).dump(); }

}  // namespace

void RunConfig::validate() const {
  variant_by_tag(variant);
  tier_by_name(tier);
  arch.validate();
  if (corpus_dir.empty()) synth.validate();
  if (train_fraction <= 0.0 || train_fraction > 1.0) {
    throw ParamError("run: train_fraction must be in (0, 1]");
  }
  if (bpe_merges < 0) throw ParamError("run: bpe_merges must be >= 0");
  if (frame_budget < 1) throw ParamError("run: frame_budget must be >= 1");
  if (max_source_frames < 1) {
    throw ParamError("run: max_source_frames must be >= 1");
  }
  if (max_epochs < 1) throw ParamError("run: max_epochs must be >= 1");
  if (initial_lr <= 0.0) throw ParamError("run: initial_lr must be > 0");
  if (decay_factor <= 0.0 || decay_factor >= 1.0) {
    throw ParamError("run: decay_factor must be in (0, 1)");
  }
  if (patience_initial < 1 || patience_later < 1) {
    throw ParamError("run: patience must be >= 1");
  }
  if (min_lr <= 0.0) throw ParamError("run: min_lr must be > 0");
  if (val_beam < 1) throw ParamError("run: val_beam must be >= 1");
  if (val_alpha < 0.0) throw ParamError("run: val_alpha must be >= 0");
  if (val_max_len < 0) throw ParamError("run: val_max_len must be >= 0");
}

nlohmann::json RunConfig::to_json() const {
  return nlohmann::json{{"variant", variant},
                        {"corpus_dir", corpus_dir},
                        {"synth", synth.to_json()},
                        {"tier", tier},
                        {"collapse_phones", collapse_phones},
                        {"train_fraction", train_fraction},
                        {"seed", seed},
                        {"arch", arch.to_json()},
                        {"bpe_merges", bpe_merges},
                        {"frame_budget", frame_budget},
                        {"max_source_frames", max_source_frames},
                        {"max_epochs", max_epochs},
                        {"initial_lr", initial_lr},
                        {"decay_factor", decay_factor},
                        {"patience_initial", patience_initial},
                        {"patience_later", patience_later},
                        {"min_lr", min_lr},
                        {"val_beam", val_beam},
                        {"val_alpha", val_alpha},
                        {"val_max_len", val_max_len},
                        {"out_dir", out_dir}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  c.variant = j.value("variant", c.variant);
  c.corpus_dir = j.value("corpus_dir", c.corpus_dir);
  if (j.contains("synth")) c.synth = SynthConfig::from_json(j.at("synth"));
  c.tier = j.value("tier", c.tier);
  c.collapse_phones = j.value("collapse_phones", c.collapse_phones);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.seed = j.value("seed", c.seed);
  if (j.contains("arch")) c.arch = ArchConfig::from_json(j.at("arch"));
  c.bpe_merges = j.value("bpe_merges", c.bpe_merges);
  c.frame_budget = j.value("frame_budget", c.frame_budget);
  c.max_source_frames = j.value("max_source_frames", c.max_source_frames);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.initial_lr = j.value("initial_lr", c.initial_lr);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.patience_initial = j.value("patience_initial", c.patience_initial);
  c.patience_later = j.value("patience_later", c.patience_later);
  c.min_lr = j.value("min_lr", c.min_lr);
  c.val_beam = j.value("val_beam", c.val_beam);
  c.val_alpha = j.value("val_alpha", c.val_alpha);
  c.val_max_len = j.value("val_max_len", c.val_max_len);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.validate();
  return c;
}

BatchPlan make_batches(const std::vector<int>& lengths, int frame_budget,
                       int max_source_frames, Rng* rng) {
  if (frame_budget < 1) throw ParamError("batches: frame_budget must be >= 1");
  if (max_source_frames < 1) {
    throw ParamError("batches: max_source_frames must be >= 1");
  }
  BatchPlan plan;
  std::vector<int> included;
  for (int i = 0; i < static_cast<int>(lengths.size()); ++i) {
    if (lengths[i] < 1) {
      throw ParamError("batches: utterance " + std::to_string(i) +
                       " has length " + std::to_string(lengths[i]));
    }
    if (lengths[i] > max_source_frames) {
      plan.excluded.push_back(i);
    } else {
      included.push_back(i);
    }
  }
  if (included.empty()) return plan;
  int shortest = lengths[*std::min_element(
      included.begin(), included.end(),
      [&](int a, int b) { return lengths[a] < lengths[b]; })];
  if (frame_budget < shortest) {
    throw ParamError("batches: frame_budget " + std::to_string(frame_budget) +
                     " is below the shortest included utterance (" +
                     std::to_string(shortest) + " frames)");
  }
  for (int i : included) {
    if (lengths[i] > frame_budget) {
      throw ParamError("batches: utterance of length " +
                       std::to_string(lengths[i]) +
                       " cannot fit in frame_budget " +
                       std::to_string(frame_budget));
    }
  }

  // Shuffle first so equal lengths land in random batches, then group by
  // length and cut greedily at the budget.
  rng->shuffle(&included);
  std::stable_sort(included.begin(), included.end(),
                   [&](int a, int b) { return lengths[a] < lengths[b]; });
  std::vector<int> cur;
  long long cur_frames = 0;
  for (int i : included) {
    if (cur_frames + lengths[i] > frame_budget) {
      plan.batches.push_back(std::move(cur));
      cur = {};
      cur_frames = 0;
    }
    cur.push_back(i);
    cur_frames += lengths[i];
  }
  plan.batches.push_back(std::move(cur));
  rng->shuffle(&plan.batches);
  return plan;
}

double schedule_update(const std::vector<double>& history, double lr,
                       double decay, int patience_initial, int patience_later) {
  if (decay <= 0.0 || decay >= 1.0) {
    throw ParamError("schedule: decay must be in (0, 1)");
  }
  if (patience_initial < 1 || patience_later < 1) {
    throw ParamError("schedule: patience must be >= 1");
  }
  double best = -std::numeric_limits<double>::infinity();
  int stagnant = 0;
  int decays = 0;
  bool decayed_now = false;
  for (double value : history) {
    decayed_now = false;
    if (value > best) {
      best = value;
      stagnant = 0;
      continue;
    }
    ++stagnant;
    int patience = decays == 0 ? patience_initial : patience_later;
    if (stagnant >= patience) {
      ++decays;
      stagnant = 0;
      decayed_now = true;
    }
  }
  return decayed_now ? lr * decay : lr;
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const EpochRecord& r : epochs) {
    nlohmann::json j{{"epoch", r.epoch},
                     {"train_loss", r.train_loss},
                     {"val_bleu", r.val_bleu},
                     {"lr", r.lr},
                     {"wall_time_s", r.wall_time_s}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string TrainLog::to_tsv() const {
  std::string out = "epoch\ttrain_loss\tval_bleu\tlr\twall_time_s\n";
  for (const EpochRecord& r : epochs) {
    out += std::to_string(r.epoch) + '\t' + num(r.train_loss) + '\t' +
           num(r.val_bleu) + '\t' + num(r.lr) + '\t' + num(r.wall_time_s) +
           '\n';
  }
  return out;
}

std::vector<int> tiered_labels(const Utterance& utt, const QualityTier& tier,
                               const SynthCorpus& corpus) {
  if (tier.p_sub == 0.0 && tier.jitter == 0) return utt.alignment.labels;
  Rng rng = Rng(corpus.config.seed).split("tier").split(tier.name).split(utt.id);
  return corrupt(utt.alignment, tier, corpus.prototypes, 0, &rng).labels;
}

namespace {

std::vector<FeatureMatrix> split_features(const std::vector<Utterance>& utts) {
  std::vector<FeatureMatrix> out;
  out.reserve(utts.size());
  for (const Utterance& u : utts) {
    FeatureMatrix f;
    f.id = u.id;
    f.speaker = u.speaker;
    f.frames = u.feats;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<PhoneAlignment> split_alignments(const std::vector<Utterance>& utts) {
  std::vector<PhoneAlignment> out;
  out.reserve(utts.size());
  for (const Utterance& u : utts) out.push_back(u.alignment);
  return out;
}

// Speakers that never appear in the (possibly subset) train split fall back
// to statistics pooled over every train frame.
void add_pooled_fallback(std::map<std::string, SpeakerStats>* stats,
                         const std::vector<FeatureMatrix>& dev,
                         const std::vector<FeatureMatrix>& test) {
  if (stats->empty()) return;
  const Eigen::Index dim = stats->begin()->second.mean.cols();
  RowVector mean = RowVector::Zero(dim);
  RowVector second = RowVector::Zero(dim);
  double total = 0.0;
  for (const auto& [spk, s] : *stats) {
    double n = static_cast<double>(s.frame_count);
    mean += n * s.mean;
    second += n * (s.var + s.mean.cwiseProduct(s.mean));
    total += n;
  }
  mean /= total;
  SpeakerStats pooled;
  pooled.mean = mean;
  pooled.var = second / total - mean.cwiseProduct(mean);
  pooled.frame_count = static_cast<std::int64_t>(total);
  for (const std::vector<FeatureMatrix>* split : {&dev, &test}) {
    for (const FeatureMatrix& f : *split) {
      if (!stats->count(f.speaker)) {
        pooled.speaker = f.speaker;
        (*stats)[f.speaker] = pooled;
      }
    }
  }
}

std::vector<PreparedUtt> prepare_split(const std::vector<Utterance>& utts,
                                       std::vector<FeatureMatrix>* normed,
                                       const ModelVariant& var,
                                       const QualityTier& tier,
                                       bool collapse_phones,
                                       const SynthCorpus& corpus,
                                       const BpeModel& bpe_src,
                                       const BpeModel& bpe_tgt) {
  bool needs_labels = var.source == SourceKind::kFramesPlusFactor ||
                      var.source == SourceKind::kAveragedFrames ||
                      var.tag == "mt_over_phones";
  std::vector<PreparedUtt> out;
  out.reserve(utts.size());
  for (size_t i = 0; i < utts.size(); ++i) {
    const Utterance& u = utts[i];
    PreparedUtt p;
    p.id = u.id;
    std::vector<int> labels;
    if (needs_labels) labels = tiered_labels(u, tier, corpus);
    switch (var.source) {
      case SourceKind::kFrames:
        p.source.feats = std::move((*normed)[i].frames);
        break;
      case SourceKind::kFramesPlusFactor:
        p.source.feats = std::move((*normed)[i].frames);
        p.source.phone_labels = labels;
        break;
      case SourceKind::kAveragedFrames:
        p.source.feats = average_by_segment((*normed)[i].frames, labels);
        break;
      case SourceKind::kTokens: {
        std::vector<int> units;
        if (var.tag == "mt_over_text") {
          units = bpe_src.encode_line(join_words(u.src_words));
          p.source.tokens = std::move(units);
        } else {
          units = collapse_phones ? collapse_runs(labels) : labels;
          p.source.tokens.reserve(units.size());
          for (int ph : units) {
            p.source.tokens.push_back(ph + kPhoneTokenOffset);
          }
        }
        break;
      }
    }
    std::string src_text = join_words(u.src_words);
    std::string tgt_text = join_words(u.tgt_words);
    p.ref_text = var.transcript_target ? src_text : tgt_text;
    p.target = var.transcript_target ? bpe_src.encode_line(src_text)
                                     : bpe_tgt.encode_line(tgt_text);
    p.target.push_back(BpeModel::kEosId);
    p.source_len = p.source.tokens.empty()
                       ? static_cast<int>(p.source.feats.rows())
                       : static_cast<int>(p.source.tokens.size());
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

DataBundle prepare_data(const RunConfig& cfg) {
  cfg.validate();
  SynthCorpus corpus =
      cfg.corpus_dir.empty() ? generate(cfg.synth) : load_corpus(cfg.corpus_dir);
  int n_train_full = static_cast<int>(corpus.train.size());
  // The subset is keyed by the corpus seed, not the run seed, so every
  // variant and every training seed sees the identical utterance subset.
  if (cfg.train_fraction < 1.0) {
    subset_train_fraction(&corpus, cfg.train_fraction, corpus.config.seed);
  }
  for (const std::vector<Utterance>* split :
       {&corpus.train, &corpus.dev, &corpus.test}) {
    check_alignment_consistency(split_alignments(*split),
                                split_features(*split));
  }

  ModelVariant var = variant_by_tag(cfg.variant);
  QualityTier tier = tier_by_name(cfg.tier);

  DataBundle data;
  data.variant = cfg.variant;
  data.inventory = corpus.inventory;
  data.n_train_full = n_train_full;

  std::vector<std::string> src_lines, tgt_lines;
  src_lines.reserve(corpus.train.size());
  tgt_lines.reserve(corpus.train.size());
  for (const Utterance& u : corpus.train) {
    src_lines.push_back(join_words(u.src_words));
    tgt_lines.push_back(join_words(u.tgt_words));
  }
  if (src_lines.empty()) throw ContractError("prepare: empty train split");
  data.bpe_src = bpe_learn(src_lines, cfg.bpe_merges);
  data.bpe_tgt = bpe_learn(tgt_lines, cfg.bpe_merges);

  bool continuous = var.source != SourceKind::kTokens;
  std::vector<FeatureMatrix> train_f, dev_f, test_f;
  if (continuous) {
    train_f = split_features(corpus.train);
    dev_f = split_features(corpus.dev);
    test_f = split_features(corpus.test);
    data.cmvn = cmvn_stats(train_f);
    add_pooled_fallback(&data.cmvn, dev_f, test_f);
    cmvn_apply(data.cmvn, &train_f);
    cmvn_apply(data.cmvn, &dev_f);
    cmvn_apply(data.cmvn, &test_f);
  } else {
    train_f.resize(corpus.train.size());
    dev_f.resize(corpus.dev.size());
    test_f.resize(corpus.test.size());
  }

  data.train = prepare_split(corpus.train, &train_f, var, tier,
                             cfg.collapse_phones, corpus, data.bpe_src,
                             data.bpe_tgt);
  data.dev = prepare_split(corpus.dev, &dev_f, var, tier, cfg.collapse_phones,
                           corpus, data.bpe_src, data.bpe_tgt);
  data.test = prepare_split(corpus.test, &test_f, var, tier,
                            cfg.collapse_phones, corpus, data.bpe_src,
                            data.bpe_tgt);

  data.dims.feat_dim = corpus.config.feat_dim;
  data.dims.n_phones =
      var.source == SourceKind::kFramesPlusFactor ? corpus.inventory.size() : 0;
  if (var.source == SourceKind::kTokens) {
    data.dims.src_vocab = var.tag == "mt_over_text"
                              ? data.bpe_src.vocab_size()
                              : kPhoneTokenOffset + corpus.inventory.size();
  }
  data.dims.tgt_vocab = var.transcript_target ? data.bpe_src.vocab_size()
                                              : data.bpe_tgt.vocab_size();
  return data;
}

EvalResult evaluate(Seq2SeqModel* model, const DataBundle& data,
                    const std::vector<PreparedUtt>& split, int beam,
                    double alpha, int max_len) {
  const BpeModel& bpe =
      model->variant().transcript_target ? data.bpe_src : data.bpe_tgt;
  BeamConfig bc;
  bc.beam = beam;
  bc.alpha = alpha;
  bc.max_len = max_len;
  EvalResult res;
  res.hyp_texts.reserve(split.size());
  std::vector<Tokens> hyps, refs_flat;
  std::vector<std::vector<Tokens>> refs;
  for (const PreparedUtt& utt : split) {
    BeamResult r = beam_search(model, utt.source, bc);
    std::vector<int> ids = r.best.tokens;
    while (!ids.empty() && ids.back() == BpeModel::kEosId) ids.pop_back();
    std::vector<std::string> pieces;
    pieces.reserve(ids.size());
    for (int id : ids) pieces.push_back(bpe.token(id));
    std::string text = bpe_decode(pieces);
    hyps.push_back(split_tokens(text));
    refs.push_back({split_tokens(utt.ref_text)});
    res.hyp_texts.push_back(std::move(text));
  }
  if (!hyps.empty()) res.bleu = corpus_bleu(hyps, refs).value;
  return res;
}

TrainResult train_on(const RunConfig& cfg, const DataBundle& data) {
  cfg.validate();
  ModelVariant var = variant_by_tag(cfg.variant);
  Rng run_rng(cfg.seed);
  Rng init_rng = run_rng.split("init");
  Seq2SeqModel model(var, cfg.arch, data.dims, &init_rng);
  AdamConfig acfg;
  acfg.lr = cfg.initial_lr;
  Adam opt(model.parameters(), acfg);
  Rng dropout_rng = run_rng.split("dropout");

  std::vector<int> lengths;
  lengths.reserve(data.train.size());
  for (const PreparedUtt& u : data.train) lengths.push_back(u.source_len);

  TrainResult result;
  Checkpoint best_ckpt;
  double best_bleu = -1.0;
  std::vector<double> history;
  double lr = cfg.initial_lr;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double t0 = now_seconds();
    Rng epoch_rng = run_rng.split("epoch").split(static_cast<uint64_t>(epoch));
    BatchPlan plan = make_batches(lengths, cfg.frame_budget,
                                  cfg.max_source_frames, &epoch_rng);
    if (epoch == 1) {
      result.log.excluded_utterances = static_cast<int>(plan.excluded.size());
    }

    double loss_sum = 0.0;
    std::int64_t token_sum = 0;
    for (const std::vector<int>& batch : plan.batches) {
      std::vector<const SourceInput*> sources;
      std::vector<std::vector<int>> targets;
      sources.reserve(batch.size());
      targets.reserve(batch.size());
      std::int64_t batch_tokens = 0;
      for (int i : batch) {
        sources.push_back(&data.train[i].source);
        targets.push_back(data.train[i].target);
        batch_tokens += static_cast<std::int64_t>(data.train[i].target.size());
      }
      Tensor loss =
          model.forward_loss(sources, targets, Mode::kTrain, &dropout_rng);
      opt.zero_grad();
      backward(loss);
      opt.step();
      model.project_target_norm();
      loss_sum += loss.value()(0, 0) * static_cast<double>(batch_tokens);
      token_sum += batch_tokens;
    }
    double train_loss =
        token_sum > 0 ? loss_sum / static_cast<double>(token_sum) : 0.0;

    EvalResult ev = evaluate(&model, data, data.dev, cfg.val_beam,
                             cfg.val_alpha, cfg.val_max_len);
    history.push_back(ev.bleu);
    if (ev.bleu > best_bleu) {
      best_bleu = ev.bleu;
      result.log.best_epoch = epoch;
      best_ckpt = model.to_checkpoint();
      best_ckpt.optimizer = nlohmann::json{{"epoch", epoch}};
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss;
    rec.val_bleu = ev.bleu;
    rec.lr = lr;
    rec.wall_time_s = now_seconds() - t0;
    result.log.epochs.push_back(rec);

    double next_lr = schedule_update(history, lr, cfg.decay_factor,
                                     cfg.patience_initial, cfg.patience_later);
    if (next_lr != lr) {
      lr = next_lr;
      opt.set_lr(lr);
    }
    if (lr < cfg.min_lr) break;
  }

  result.log.best_val_bleu = best_bleu;
  result.epochs_run = static_cast<int>(result.log.epochs.size());
  result.dev_bleu = best_bleu;

  model.load_checkpoint(best_ckpt);
  EvalResult test_ev = evaluate(&model, data, data.test, cfg.val_beam,
                                cfg.val_alpha, cfg.val_max_len);
  result.test_bleu = test_ev.bleu;

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::string d = cfg.out_dir + "/";
    write_json_file(d + "run.json", cfg.to_json());
    write_file_atomic(d + "train_log.jsonl", result.log.to_jsonl());
    write_file_atomic(d + "train_log.tsv", result.log.to_tsv());
    save_checkpoint(d + "best.ckpt.json", best_ckpt);
    result.best_ckpt_path = d + "best.ckpt.json";
    std::string hyp_lines;
    for (size_t i = 0; i < data.test.size(); ++i) {
      hyp_lines += data.test[i].id + '\t' + test_ev.hyp_texts[i] + '\n';
    }
    write_file_atomic(d + "test_hyps.txt", hyp_lines);
    data.bpe_src.save(d + "bpe_src.merges", d + "bpe_src.vocab");
    data.bpe_tgt.save(d + "bpe_tgt.merges", d + "bpe_tgt.vocab");
    if (!data.cmvn.empty()) {
      write_json_file(d + "cmvn.json", speaker_stats_to_json(data.cmvn));
    }
    nlohmann::json metrics{{"variant", cfg.variant},
                           {"tier", cfg.tier},
                           {"collapse_phones", cfg.collapse_phones},
                           {"train_fraction", cfg.train_fraction},
                           {"seed", cfg.seed},
                           {"dev_bleu", result.dev_bleu},
                           {"test_bleu", result.test_bleu},
                           {"best_epoch", result.log.best_epoch},
                           {"epochs_run", result.epochs_run},
                           {"excluded_utterances", result.log.excluded_utterances},
                           {"n_train", data.train.size()},
                           {"n_train_full", data.n_train_full}};
    write_json_file(d + "metrics.json", metrics);
  }
  return result;
}

TrainResult train_run(const RunConfig& cfg) {
  DataBundle data = prepare_data(cfg);
  return train_on(cfg, data);
}

}  // namespace phonest
