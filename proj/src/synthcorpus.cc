// synthcorpus.cc

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

#include "phonest/synthcorpus.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "phonest/checkpoint.h"
#include "phonest/common.h"
#include "phonest/rng.h"

namespace phonest {

namespace {

constexpr double kFramesPerSecond = 100.0;

std::string pad_num(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

std::vector<std::vector<int>> sample_lexicon(const SynthConfig& cfg, Rng* rng) {
  std::vector<std::vector<int>> lexicon;
  std::set<std::vector<int>> seen;
  int attempts = 0;
  while (static_cast<int>(lexicon.size()) < cfg.lexicon_size) {
    if (++attempts > 10000 * cfg.lexicon_size) {
      throw ParamError(
          "synth: cannot sample a lexicon of " +
          std::to_string(cfg.lexicon_size) +
          " distinct words; inventory or word length range is too small");
    }
    int len = rng->uniform_int(cfg.min_word_phones, cfg.max_word_phones);
    std::vector<int> word(len);
    for (int i = 0; i < len; ++i) {
      int p = rng->uniform_int(1, cfg.n_phones);
      while (i > 0 && p == word[i - 1]) p = rng->uniform_int(1, cfg.n_phones);
      word[i] = p;
    }
    if (seen.insert(word).second) lexicon.push_back(std::move(word));
  }
  return lexicon;
}

struct SegmentPlan {
  int label = 0;
  int dur = 0;
};

Matrix render_frames(const std::vector<SegmentPlan>& plan, const Matrix& protos,
                     const SynthConfig& cfg, Rng* rng) {
  int total = 0;
  for (const auto& s : plan) total += s.dur;
  Matrix feats(total, cfg.feat_dim);
  int row = 0;
  int n = static_cast<int>(plan.size());
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < plan[k].dur; ++j, ++row) {
      int d_start = j;
      int d_end = plan[k].dur - 1 - j;
      double alpha = 0.0;
      int neighbor = -1;
      bool near_start = k > 0 && d_start < cfg.coart_width;
      bool near_end = k + 1 < n && d_end < cfg.coart_width;
      if (near_start && near_end && d_end < d_start) near_start = false;
      if (near_start) {
        alpha = static_cast<double>(cfg.coart_width - d_start) / (3.0 * cfg.coart_width);
        neighbor = plan[k - 1].label;
      } else if (near_end) {
        alpha = static_cast<double>(cfg.coart_width - d_end) / (3.0 * cfg.coart_width);
        neighbor = plan[k + 1].label;
      }
      for (int d = 0; d < cfg.feat_dim; ++d) {
        double base = (1.0 - alpha) * protos(plan[k].label, d);
        if (neighbor >= 0) base += alpha * protos(neighbor, d);
        feats(row, d) = base + cfg.noise_sigma * rng->normal();
      }
    }
  }
  return feats;
}

Utterance make_utterance(const SynthCorpus& corpus, const std::string& split,
                         int index, Rng* rng) {
  const SynthConfig& cfg = corpus.config;
  Utterance u;
  u.id = split + "-" + pad_num(index, 5);
  u.speaker = "spk" + std::to_string(index % cfg.n_speakers);

  int n_words = rng->uniform_int(cfg.min_words, cfg.max_words);
  std::vector<int> word_ids(n_words);
  for (int& w : word_ids) w = rng->uniform_int(0, cfg.lexicon_size - 1);

  std::vector<SegmentPlan> plan;
  for (int w = 0; w < n_words; ++w) {
    if (w > 0) plan.push_back({0, 0});  // silence between words
    for (int p : corpus.lexicon[word_ids[w]]) plan.push_back({p, 0});
  }
  for (auto& s : plan) s.dur = rng->uniform_int(cfg.min_dur, cfg.max_dur);

  u.feats = render_frames(plan, corpus.prototypes, cfg, rng);
  u.alignment.id = u.id;
  for (const auto& s : plan) u.alignment.labels.insert(u.alignment.labels.end(), s.dur, s.label);

  for (int w : word_ids) u.src_words.push_back(corpus.src_vocab[w]);
  u.tgt_words = target_of(corpus, word_ids);
  return u;
}

std::vector<std::pair<std::string, std::vector<std::string>>> read_id_text(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open text file " + path);
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing TAB");
    }
    std::vector<std::string> words;
    std::istringstream ws(line.substr(tab + 1));
    std::string w;
    while (ws >> w) words.push_back(w);
    out.emplace_back(line.substr(0, tab), std::move(words));
  }
  return out;
}

void write_id_text(
    const std::string& path,
    const std::vector<Utterance>& utts,
    const std::vector<std::string> Utterance::* field) {
  std::ostringstream out;
  for (const auto& u : utts) {
    out << u.id << '\t';
    const auto& words = u.*field;
    for (size_t i = 0; i < words.size(); ++i) {
      if (i) out << ' ';
      out << words[i];
    }
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace

void SynthConfig::validate() const {
  if (min_dur < 1 || max_dur > 100 || min_dur > max_dur) {
    throw ParamError("synth: duration range must satisfy 1 <= min <= max <= 100");
  }
  if (n_phones < 2) throw ParamError("synth: need at least 2 phones");
  if (feat_dim < 1) throw ParamError("synth: feat_dim must be positive");
  if (lexicon_size < 1) throw ParamError("synth: lexicon_size must be positive");
  if (min_word_phones < 1 || min_word_phones > max_word_phones) {
    throw ParamError("synth: bad word length range");
  }
  if (min_words < 1 || min_words > max_words) {
    throw ParamError("synth: bad sentence length range");
  }
  if (noise_sigma < 0) throw ParamError("synth: noise sigma must be >= 0");
  if (coart_width < 0) throw ParamError("synth: coarticulation width must be >= 0");
  if (reorder_prob < 0 || reorder_prob > 1) {
    throw ParamError("synth: reorder probability must be in [0, 1]");
  }
  if (n_train < 0 || n_dev < 0 || n_test < 0) {
    throw ParamError("synth: split sizes must be >= 0");
  }
  if (n_speakers < 1) throw ParamError("synth: need at least one speaker");
}

nlohmann::json SynthConfig::to_json() const {
  return nlohmann::json{{"n_phones", n_phones},
                        {"feat_dim", feat_dim},
                        {"lexicon_size", lexicon_size},
                        {"min_word_phones", min_word_phones},
                        {"max_word_phones", max_word_phones},
                        {"min_words", min_words},
                        {"max_words", max_words},
                        {"min_dur", min_dur},
                        {"max_dur", max_dur},
                        {"noise_sigma", noise_sigma},
                        {"coart_width", coart_width},
                        {"reorder_prob", reorder_prob},
                        {"n_train", n_train},
                        {"n_dev", n_dev},
                        {"n_test", n_test},
                        {"n_speakers", n_speakers},
                        {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.n_phones = j.value("n_phones", c.n_phones);
  c.feat_dim = j.value("feat_dim", c.feat_dim);
  c.lexicon_size = j.value("lexicon_size", c.lexicon_size);
  c.min_word_phones = j.value("min_word_phones", c.min_word_phones);
  c.max_word_phones = j.value("max_word_phones", c.max_word_phones);
  c.min_words = j.value("min_words", c.min_words);
  c.max_words = j.value("max_words", c.max_words);
  c.min_dur = j.value("min_dur", c.min_dur);
  c.max_dur = j.value("max_dur", c.max_dur);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.coart_width = j.value("coart_width", c.coart_width);
  c.reorder_prob = j.value("reorder_prob", c.reorder_prob);
  c.n_train = j.value("n_train", c.n_train);
  c.n_dev = j.value("n_dev", c.n_dev);
  c.n_test = j.value("n_test", c.n_test);
  c.n_speakers = j.value("n_speakers", c.n_speakers);
  c.seed = j.value("seed", c.seed);
  return c;
}

bool swap_decision(std::uint64_t seed, double reorder_prob, int word_a, int word_b) {
  Rng r = Rng(seed)
              .split("swap")
              .split(static_cast<std::uint64_t>(word_a))
              .split(static_cast<std::uint64_t>(word_b));
  return r.uniform() < reorder_prob;
}

std::vector<std::string> target_of(const SynthCorpus& corpus,
                                   const std::vector<int>& word_ids) {
  std::vector<std::string> tgt;
  tgt.reserve(word_ids.size());
  for (int w : word_ids) {
    if (w < 0 || w >= static_cast<int>(corpus.tgt_vocab.size())) {
      throw IndexError("word id " + std::to_string(w) + " outside the lexicon");
    }
    tgt.push_back(corpus.tgt_vocab[w]);
  }
  for (size_t i = 0; i + 1 < word_ids.size();) {
    if (swap_decision(corpus.config.seed, corpus.config.reorder_prob,
                      word_ids[i], word_ids[i + 1])) {
      std::swap(tgt[i], tgt[i + 1]);
      i += 2;
    } else {
      ++i;
    }
  }
  return tgt;
}

SynthCorpus generate(const SynthConfig& config) {
  config.validate();
  SynthCorpus corpus;
  corpus.config = config;

  std::vector<std::string> names = {"sil"};
  for (int p = 1; p <= config.n_phones; ++p) names.push_back("p" + pad_num(p, 2));
  corpus.inventory = PhoneInventory::from_names(names);

  Rng root(config.seed);
  corpus.prototypes = Matrix::Zero(corpus.inventory.size(), config.feat_dim);
  for (int p = 1; p <= config.n_phones; ++p) {
    Rng pr = root.split("proto").split(static_cast<std::uint64_t>(p));
    for (int d = 0; d < config.feat_dim; ++d) corpus.prototypes(p, d) = pr.normal();
  }

  Rng lex = root.split("lexicon");
  corpus.lexicon = sample_lexicon(config, &lex);
  for (int w = 0; w < config.lexicon_size; ++w) {
    corpus.src_vocab.push_back("w" + pad_num(w, 2));
    corpus.tgt_vocab.push_back("t" + pad_num(w, 2));
  }

  auto fill_split = [&](const std::string& split, int count,
                        std::vector<Utterance>* out) {
    out->reserve(count);
    for (int i = 0; i < count; ++i) {
      Rng u = root.split(split).split(static_cast<std::uint64_t>(i));
      out->push_back(make_utterance(corpus, split, i, &u));
    }
  };
  fill_split("train", config.n_train, &corpus.train);
  fill_split("dev", config.n_dev, &corpus.dev);
  fill_split("test", config.n_test, &corpus.test);
  return corpus;
}

namespace {

std::vector<int> shuffled_train_order(const SynthCorpus& corpus, std::uint64_t seed) {
  std::vector<int> order(corpus.train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng r = Rng(seed).split("subset");
  r.shuffle(&order);
  return order;
}

void keep_prefix(SynthCorpus* corpus, std::vector<int> order, size_t count) {
  order.resize(count);
  std::sort(order.begin(), order.end());
  std::vector<Utterance> kept;
  kept.reserve(count);
  for (int i : order) kept.push_back(std::move(corpus->train[i]));
  corpus->train = std::move(kept);
}

}  // namespace

void subset_train_fraction(SynthCorpus* corpus, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw ParamError("subset: fraction must be in [0, 1]");
  }
  auto n = static_cast<size_t>(
      std::llround(fraction * static_cast<double>(corpus->train.size())));
  keep_prefix(corpus, shuffled_train_order(*corpus, seed), n);
}

void subset_train_hours(SynthCorpus* corpus, double hours, std::uint64_t seed) {
  if (hours < 0.0) throw ParamError("subset: hours must be >= 0");
  double have = corpus_hours(corpus->train);
  if (hours > have) {
    throw ParamError("subset: requested " + std::to_string(hours) +
                     " hours but the train split has " + std::to_string(have));
  }
  std::vector<int> order = shuffled_train_order(*corpus, seed);
  double target_frames = hours * 3600.0 * kFramesPerSecond;
  double acc = 0.0;
  size_t n = 0;
  while (n < order.size() && acc < target_frames) {
    acc += static_cast<double>(corpus->train[order[n]].feats.rows());
    ++n;
  }
  keep_prefix(corpus, std::move(order), n);
}

double corpus_hours(const std::vector<Utterance>& utts) {
  double frames = 0;
  for (const auto& u : utts) frames += static_cast<double>(u.feats.rows());
  return frames / kFramesPerSecond / 3600.0;
}

std::vector<FeatureMatrix> corpus_features(const std::vector<Utterance>& utts) {
  std::vector<FeatureMatrix> out;
  out.reserve(utts.size());
  for (const auto& u : utts) {
    FeatureMatrix f;
    f.id = u.id;
    f.speaker = u.speaker;
    f.frames = u.feats;
    out.push_back(std::move(f));
  }
  return out;
}

void emit_corpus(const SynthCorpus& corpus, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto emit_split = [&](const std::string& split, const std::vector<Utterance>& utts) {
    std::string base = out_dir + "/" + split;
    write_features_jsonl(base + ".feats.jsonl", corpus_features(utts));
    std::vector<PhoneAlignment> aligns;
    aligns.reserve(utts.size());
    for (const auto& u : utts) aligns.push_back(u.alignment);
    write_alignments(base + ".align.tsv", aligns, corpus.inventory);
    write_id_text(base + ".src.txt", utts, &Utterance::src_words);
    write_id_text(base + ".ref0.txt", utts, &Utterance::tgt_words);
  };
  emit_split("train", corpus.train);
  emit_split("dev", corpus.dev);
  emit_split("test", corpus.test);

  nlohmann::json j;
  j["config"] = corpus.config.to_json();
  j["inventory"] = corpus.inventory.names();
  j["prototypes"] = matrix_to_json(corpus.prototypes);
  j["lexicon"] = corpus.lexicon;
  j["src_vocab"] = corpus.src_vocab;
  j["tgt_vocab"] = corpus.tgt_vocab;
  write_json_file(out_dir + "/corpus.json", j);
}

SynthCorpus load_corpus(const std::string& dir) {
  nlohmann::json j = read_json_file(dir + "/corpus.json");
  SynthCorpus corpus;
  corpus.config = SynthConfig::from_json(j.at("config"));
  corpus.inventory =
      PhoneInventory::from_names(j.at("inventory").get<std::vector<std::string>>());
  corpus.prototypes = matrix_from_json(j.at("prototypes"));
  corpus.lexicon = j.at("lexicon").get<std::vector<std::vector<int>>>();
  corpus.src_vocab = j.at("src_vocab").get<std::vector<std::string>>();
  corpus.tgt_vocab = j.at("tgt_vocab").get<std::vector<std::string>>();

  auto load_split = [&](const std::string& split, std::vector<Utterance>* out) {
    std::string base = dir + "/" + split;
    std::vector<FeatureMatrix> feats = read_features_jsonl(base + ".feats.jsonl");
    std::vector<PhoneAlignment> aligns =
        load_alignments(base + ".align.tsv", &corpus.inventory);
    check_alignment_consistency(aligns, feats);
    auto src = read_id_text(base + ".src.txt");
    auto ref = read_id_text(base + ".ref0.txt");
    if (feats.size() != aligns.size() || feats.size() != src.size() ||
        feats.size() != ref.size()) {
      throw ConsistencyError("split " + split + " has mismatched record counts");
    }
    out->resize(feats.size());
    std::unordered_map<std::string, size_t> by_id;
    for (size_t i = 0; i < feats.size(); ++i) by_id[feats[i].id] = i;
    for (size_t i = 0; i < feats.size(); ++i) {
      Utterance& u = (*out)[i];
      u.id = feats[i].id;
      u.speaker = feats[i].speaker;
      u.feats = std::move(feats[i].frames);
    }
    auto place = [&](const std::string& what, const std::string& id) -> Utterance& {
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw ConsistencyError(what + " record " + id + " has no features");
      }
      return (*out)[it->second];
    };
    for (auto& a : aligns) place("alignment", a.id).alignment = std::move(a);
    for (auto& [id, words] : src) place("source", id).src_words = std::move(words);
    for (auto& [id, words] : ref) place("reference", id).tgt_words = std::move(words);
  };
  load_split("train", &corpus.train);
  load_split("dev", &corpus.dev);
  load_split("test", &corpus.test);
  return corpus;
}

}  // namespace phonest
