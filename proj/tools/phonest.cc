// phonest.cc

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

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "phonest/checkpoint.h"
#include "phonest/common.h"
#include "phonest/experiment.h"
#include "phonest/metrics.h"
#include "phonest/phonesup.h"
#include "phonest/stmodel.h"
#include "phonest/synthcorpus.h"
#include "phonest/textpipe.h"
#include "phonest/trainer.h"

namespace phonest {
namespace {

std::string num(double v) { return nlohmann::json(v).dump(); }

// Every command resolves its options as JSON: built-in defaults, then the
// --config file, then explicit flags.
nlohmann::json config_base(const nlohmann::json& defaults,
                           const std::string& config_path) {
  nlohmann::json j = defaults;
  if (!config_path.empty()) {
    nlohmann::json file = read_json_file(config_path);
    if (!file.is_object()) {
      throw ParamError("config: " + config_path + " must hold a JSON object");
    }
    j.merge_patch(file);
  }
  return j;
}

template <typename T>
void set_if(const CLI::App& cmd, const std::string& flag, nlohmann::json* j,
            const std::string& key, const T& value) {
  if (cmd.count(flag) > 0) (*j)[key] = value;
}

template <typename T>
void set_arch_if(const CLI::App& cmd, const std::string& flag,
                 nlohmann::json* j, const std::string& key, const T& value) {
  if (cmd.count(flag) > 0) (*j)["arch"][key] = value;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_lines(const std::string& path, const std::string& body) {
  if (path.empty()) {
    std::cout << body;
  } else {
    write_file_atomic(path, body);
  }
}

const std::vector<Utterance>& corpus_split(const SynthCorpus& corpus,
                                           const std::string& split) {
  if (split == "train") return corpus.train;
  if (split == "dev") return corpus.dev;
  if (split == "test") return corpus.test;
  throw ParamError("unknown split '" + split + "'");
}

const std::vector<PreparedUtt>& bundle_split(const DataBundle& data,
                                             const std::string& split) {
  if (split == "train") return data.train;
  if (split == "dev") return data.dev;
  if (split == "test") return data.test;
  throw ParamError("unknown split '" + split + "'");
}

Seq2SeqModel model_from_run_dir(const RunConfig& cfg, const DataBundle& data,
                                const std::string& run_dir) {
  Rng dummy(1);
  Seq2SeqModel model(variant_by_tag(cfg.variant), cfg.arch, data.dims, &dummy);
  model.load_checkpoint(load_checkpoint(run_dir + "/best.ckpt.json"));
  return model;
}

int cmd_synth(const CLI::App& cmd, const nlohmann::json& opts) {
  std::string out = opts.value("out", std::string());
  if (out.empty()) throw ParamError("synth: --out directory is required");
  SynthConfig cfg = SynthConfig::from_json(opts);
  SynthCorpus corpus = generate(cfg);
  emit_corpus(corpus, out);
  std::cerr << "[synth] " << corpus.train.size() << " train / "
            << corpus.dev.size() << " dev / " << corpus.test.size()
            << " test utterances -> " << out << "\n";
  (void)cmd;
  return 0;
}

int cmd_align(const nlohmann::json& opts) {
  std::string dir = opts.value("corpus", std::string());
  std::string out = opts.value("out", std::string());
  if (dir.empty() || out.empty()) {
    throw ParamError("align: --corpus and --out are required");
  }
  std::string split = opts.value("split", std::string("test"));
  QualityTier tier = tier_by_name(opts.value("tier", std::string("gold")));

  SynthCorpus corpus = load_corpus(dir);
  const std::vector<Utterance>& utts = corpus_split(corpus, split);
  std::vector<PhoneAlignment> aligned;
  std::int64_t agree = 0, total = 0;
  for (const Utterance& u : utts) {
    PhoneAlignment a;
    a.id = u.id;
    a.labels = tiered_labels(u, tier, corpus);
    for (size_t t = 0; t < a.labels.size(); ++t) {
      agree += a.labels[t] == u.alignment.labels[t] ? 1 : 0;
    }
    total += a.labels.size();
    aligned.push_back(std::move(a));
  }
  write_alignments(out, aligned, corpus.inventory);
  double acc = total > 0 ? static_cast<double>(agree) / total : 0.0;
  std::cerr << "[align] tier " << tier.name << " on " << split << ": "
            << aligned.size() << " alignments, frame accuracy " << num(acc)
            << " -> " << out << "\n";
  return 0;
}

int cmd_bpe(const nlohmann::json& opts) {
  std::string input = opts.value("input", std::string());
  if (input.empty()) throw ParamError("bpe: --input file is required");
  std::string model_prefix = opts.value("model", std::string());

  if (!model_prefix.empty()) {
    BpeModel model =
        BpeModel::load(model_prefix + ".merges", model_prefix + ".vocab");
    std::string body;
    for (const std::string& line : read_lines(input)) {
      std::vector<std::string> pieces = model.apply_line(line);
      std::string joined;
      for (size_t i = 0; i < pieces.size(); ++i) {
        if (i > 0) joined += ' ';
        joined += pieces[i];
      }
      body += joined + '\n';
    }
    write_lines(opts.value("out", std::string()), body);
    return 0;
  }

  std::string out = opts.value("out", std::string());
  if (out.empty()) throw ParamError("bpe: --out prefix is required to learn");
  int merges = opts.value("merges", 120);
  BpeModel model = bpe_learn(read_lines(input), merges);
  model.save(out + ".merges", out + ".vocab");
  std::cerr << "[bpe] " << model.merges().size() << " merges, vocab "
            << model.vocab_size() << " -> " << out << ".{merges,vocab}\n";
  return 0;
}

int cmd_train(const nlohmann::json& opts) {
  RunConfig cfg = RunConfig::from_json(opts);
  TrainResult res = train_run(cfg);
  nlohmann::json summary{{"variant", cfg.variant},
                         {"dev_bleu", res.dev_bleu},
                         {"test_bleu", res.test_bleu},
                         {"best_epoch", res.log.best_epoch},
                         {"epochs_run", res.epochs_run},
                         {"out_dir", cfg.out_dir}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_translate(const nlohmann::json& opts) {
  std::string run_dir = opts.value("run_dir", std::string());
  if (run_dir.empty()) throw ParamError("translate: --run-dir is required");
  std::string split = opts.value("split", std::string("test"));

  RunConfig cfg = RunConfig::from_json(read_json_file(run_dir + "/run.json"));
  int beam = opts.value("beam", cfg.val_beam);
  double alpha = opts.value("alpha", cfg.val_alpha);
  int max_len = opts.value("max_len", cfg.val_max_len);

  DataBundle data = prepare_data(cfg);
  Seq2SeqModel model = model_from_run_dir(cfg, data, run_dir);
  const std::vector<PreparedUtt>& utts = bundle_split(data, split);
  EvalResult res = evaluate(&model, data, utts, beam, alpha, max_len);

  std::string body;
  for (size_t i = 0; i < utts.size(); ++i) {
    body += utts[i].id + '\t' + res.hyp_texts[i] + '\n';
  }
  write_lines(opts.value("out", std::string()), body);
  std::cerr << "[translate] " << utts.size() << " utterances, beam " << beam
            << ", BLEU " << num(res.bleu) << "\n";
  return 0;
}

int cmd_cascade(const nlohmann::json& opts) {
  std::string s1 = opts.value("stage1_dir", std::string());
  std::string s2 = opts.value("stage2_dir", std::string());
  if (s1.empty() || s2.empty()) {
    throw ParamError("cascade: --stage1-dir and --stage2-dir are required");
  }
  CascadePipe pipe = cascade_from_dirs(
      s1, s2, opts.value("split", std::string("test")), opts.value("beam", 0),
      opts.value("alpha", -1.0), opts.value("max_len", 0));
  std::string body;
  for (size_t i = 0; i < pipe.ids.size(); ++i) {
    body += pipe.ids[i] + '\t' + pipe.hyp_texts[i] + '\n';
  }
  write_lines(opts.value("out", std::string()), body);
  std::cerr << "[cascade] " << pipe.ids.size() << " utterances, BLEU "
            << num(pipe.bleu) << ", stage-1 WER " << num(pipe.stage1_wer)
            << "\n";
  return 0;
}

int cmd_score(const nlohmann::json& opts) {
  std::string hyp_path = opts.value("hyp", std::string());
  std::string ref_path = opts.value("ref", std::string());
  if (hyp_path.empty() || ref_path.empty()) {
    throw ParamError("score: --hyp and --ref are required");
  }
  std::vector<std::string> hyp_lines = read_lines(hyp_path);
  std::vector<std::string> ref_lines = read_lines(ref_path);
  if (hyp_lines.size() != ref_lines.size()) {
    throw ParamError("score: " + std::to_string(hyp_lines.size()) +
                     " hypotheses vs " + std::to_string(ref_lines.size()) +
                     " references");
  }
  // Hypothesis files may carry a leading `id<TAB>` column (translate output).
  bool strip_ids = opts.value("strip_ids", false);
  std::vector<Tokens> hyps, refs;
  for (size_t i = 0; i < hyp_lines.size(); ++i) {
    std::string h = hyp_lines[i];
    if (strip_ids) {
      size_t tab = h.find('\t');
      if (tab != std::string::npos) h = h.substr(tab + 1);
    }
    hyps.push_back(split_tokens(h));
    refs.push_back(split_tokens(ref_lines[i]));
  }

  std::string metric = opts.value("metric", std::string("bleu"));
  if (metric == "bleu") {
    std::vector<std::vector<Tokens>> ref_sets;
    for (const Tokens& r : refs) ref_sets.push_back({r});
    ScoreReport rep = corpus_bleu(hyps, ref_sets);
    std::cout << "bleu\t" << num(rep.value) << "\n";
    std::cout << "precisions\t" << num(rep.precisions[0]) << ","
              << num(rep.precisions[1]) << "," << num(rep.precisions[2]) << ","
              << num(rep.precisions[3]) << "\n";
    std::cout << "brevity_penalty\t" << num(rep.brevity_penalty) << "\n";
    std::cout << "hyp_tokens\t" << rep.hyp_tokens << "\n";
    std::cout << "ref_tokens\t" << rep.ref_tokens << "\n";
  } else if (metric == "wer") {
    ScoreReport rep = wer(hyps, refs);
    std::cout << "wer\t" << num(rep.value) << "\n";
  } else {
    throw ParamError("score: unknown metric '" + metric + "'");
  }
  return 0;
}

int cmd_experiment(const nlohmann::json& opts, const std::string& manifest_path,
                   bool smoke, bool full, bool skip_trends) {
  int modes = (manifest_path.empty() ? 0 : 1) + (smoke ? 1 : 0) + (full ? 1 : 0);
  if (modes != 1) {
    throw ParamError("experiment: pass exactly one of --manifest, --smoke, "
                     "--full");
  }
  std::string out = opts.value("out", std::string());
  ExperimentManifest m;
  if (smoke) {
    if (out.empty()) throw ParamError("experiment: --smoke needs --out");
    m = smoke_manifest(out);
  } else if (full) {
    if (out.empty()) throw ParamError("experiment: --full needs --out");
    m = full_manifest(out);
  } else {
    m = ExperimentManifest::from_json(read_json_file(manifest_path));
    if (!out.empty()) m.out_dir = out;
  }
  if (opts.contains("workers")) m.workers = opts.at("workers").get<int>();
  if (opts.contains("seed")) m.seed = opts.at("seed").get<std::uint64_t>();

  ExperimentResults res = run_experiment(m);
  std::cout << results_tsv(res.rows, m.baseline);
  std::cerr << "[experiment] " << res.computed << " computed, " << res.resumed
            << " resumed, " << res.failures.size() << " failed -> " << m.out_dir
            << "/results.tsv\n";
  for (const CellFailure& f : res.failures) {
    std::cerr << "[experiment] FAILED " << f.key << ": " << f.error << "\n";
  }

  bool trends_pass = true;
  if (!skip_trends && m.trends.is_array() && !m.trends.empty()) {
    TrendReport report = assert_trends(res.rows, m.trends);
    std::cout << report.to_text();
    write_file_atomic(m.out_dir + "/trends.txt", report.to_text());
    write_json_file(m.out_dir + "/trends.json", report.to_json());
    trends_pass = report.all_evaluable_pass;
  }
  if (!res.failures.empty()) return 1;
  return trends_pass ? 0 : 2;
}

int cmd_assert_trends(const nlohmann::json& opts) {
  std::string results_path = opts.value("results", std::string());
  if (results_path.empty()) {
    throw ParamError("assert-trends: --results is required");
  }
  std::vector<MetricsRow> rows =
      rows_from_results_json(read_json_file(results_path));

  nlohmann::json spec;
  std::string trends_path = opts.value("trends", std::string());
  std::string builtin = opts.value("builtin", std::string());
  if (!trends_path.empty() && !builtin.empty()) {
    throw ParamError("assert-trends: pass --trends or --builtin, not both");
  }
  if (!trends_path.empty()) {
    spec = read_json_file(trends_path);
  } else if (builtin == "full" || builtin.empty()) {
    spec = paper_trends(true);
  } else if (builtin == "smoke") {
    spec = paper_trends(false);
  } else {
    throw ParamError("assert-trends: unknown builtin '" + builtin + "'");
  }

  TrendReport report = assert_trends(rows, spec);
  std::cout << report.to_text();
  return report.all_evaluable_pass ? 0 : 2;
}

}  // namespace
}  // namespace phonest

int main(int argc, char** argv) {
  using namespace phonest;
  CLI::App app{"phonest: speech translation with phone supervision"};
  app.require_subcommand(1);

  // synth
  CLI::App* synth = app.add_subcommand(
      "synth", "Generate a synthetic speech translation corpus");
  std::string synth_config, synth_out;
  int s_n_train = 0, s_n_dev = 0, s_n_test = 0, s_n_phones = 0, s_feat_dim = 0;
  int s_lexicon = 0, s_speakers = 0;
  double s_noise = 0.0, s_reorder = 0.0;
  std::uint64_t s_seed = 0;
  synth->add_option("--config", synth_config, "JSON config file");
  synth->add_option("--out", synth_out, "Output corpus directory");
  synth->add_option("--n-train", s_n_train, "Training utterances");
  synth->add_option("--n-dev", s_n_dev, "Validation utterances");
  synth->add_option("--n-test", s_n_test, "Test utterances");
  synth->add_option("--n-phones", s_n_phones, "Phone inventory size");
  synth->add_option("--feat-dim", s_feat_dim, "Feature dimension");
  synth->add_option("--lexicon-size", s_lexicon, "Source lexicon size");
  synth->add_option("--n-speakers", s_speakers, "Speaker count");
  synth->add_option("--noise-sigma", s_noise, "Feature noise sigma");
  synth->add_option("--reorder-prob", s_reorder, "Translation reorder prob");
  synth->add_option("--seed", s_seed, "Corpus seed");

  // align
  CLI::App* align = app.add_subcommand(
      "align", "Export phone alignments under a quality tier");
  std::string align_config, align_corpus, align_tier, align_split, align_out;
  align->add_option("--config", align_config, "JSON config file");
  align->add_option("--corpus", align_corpus, "Corpus directory");
  align->add_option("--tier", align_tier, "gold, high, med, or low");
  align->add_option("--split", align_split, "train, dev, or test");
  align->add_option("--out", align_out, "Output alignment TSV");

  // bpe
  CLI::App* bpe = app.add_subcommand(
      "bpe", "Learn subword merges, or apply a saved model");
  std::string bpe_config, bpe_input, bpe_out, bpe_model;
  int bpe_merges = 0;
  bpe->add_option("--config", bpe_config, "JSON config file");
  bpe->add_option("--input", bpe_input, "Text file, one sentence per line");
  bpe->add_option("--merges", bpe_merges, "Merge operations to learn");
  bpe->add_option("--out", bpe_out, "Output prefix (learn) or file (apply)");
  bpe->add_option("--model", bpe_model, "Saved model prefix; switches to apply");

  // train
  CLI::App* train = app.add_subcommand("train", "Train one model variant");
  std::string tr_config, tr_variant, tr_corpus_dir, tr_tier, tr_out_dir;
  double tr_fraction = 0.0, tr_lr = 0.0, tr_dropout = 0.0, tr_smoothing = 0.0;
  std::uint64_t tr_seed = 0;
  int tr_epochs = 0, tr_budget = 0, tr_merges = 0, tr_beam = 0;
  int tr_hidden = 0, tr_attn = 0, tr_embed = 0;
  bool tr_collapse = true;
  train->add_option("--config", tr_config, "Run config JSON file");
  train->add_option("--variant", tr_variant, "Model variant tag");
  train->add_option("--corpus-dir", tr_corpus_dir, "Corpus directory");
  train->add_option("--tier", tr_tier, "Phone quality tier");
  train->add_option("--train-fraction", tr_fraction, "Training subset");
  train->add_option("--seed", tr_seed, "Run seed");
  train->add_option("--out-dir", tr_out_dir, "Run output directory");
  train->add_option("--max-epochs", tr_epochs, "Epoch cap");
  train->add_option("--frame-budget", tr_budget, "Batch frame budget");
  train->add_option("--bpe-merges", tr_merges, "Subword merges");
  train->add_option("--lr", tr_lr, "Initial learning rate");
  train->add_option("--val-beam", tr_beam, "Validation beam width");
  train->add_option("--collapse-phones", tr_collapse,
                    "Collapse repeated phone labels for token sources");
  train->add_option("--hidden", tr_hidden, "Encoder hidden units");
  train->add_option("--attn-units", tr_attn, "Attention units");
  train->add_option("--embed-dim", tr_embed, "Embedding dimension");
  train->add_option("--dropout", tr_dropout, "Dropout rate");
  train->add_option("--label-smoothing", tr_smoothing, "Label smoothing");

  // translate
  CLI::App* translate = app.add_subcommand(
      "translate", "Decode a split with a trained run");
  std::string dec_config, dec_run_dir, dec_split, dec_out;
  int dec_beam = 0, dec_max_len = 0;
  double dec_alpha = 0.0;
  translate->add_option("--config", dec_config, "JSON config file");
  translate->add_option("--run-dir", dec_run_dir, "Trained run directory");
  translate->add_option("--split", dec_split, "train, dev, or test");
  translate->add_option("--beam", dec_beam, "Beam width");
  translate->add_option("--alpha", dec_alpha, "Length normalization power");
  translate->add_option("--max-len", dec_max_len, "Decode length cap");
  translate->add_option("--out", dec_out, "Output file (default stdout)");

  // cascade
  CLI::App* cascade = app.add_subcommand(
      "cascade", "Pipe a transcript run into a text translation run");
  std::string cas_config, cas_s1, cas_s2, cas_split, cas_out;
  int cas_beam = 0, cas_max_len = 0;
  double cas_alpha = 0.0;
  cascade->add_option("--config", cas_config, "JSON config file");
  cascade->add_option("--stage1-dir", cas_s1, "Transcript run directory");
  cascade->add_option("--stage2-dir", cas_s2, "Translation run directory");
  cascade->add_option("--split", cas_split, "train, dev, or test");
  cascade->add_option("--beam", cas_beam, "Beam width for both stages");
  cascade->add_option("--alpha", cas_alpha, "Length normalization power");
  cascade->add_option("--max-len", cas_max_len, "Decode length cap");
  cascade->add_option("--out", cas_out, "Output file (default stdout)");

  // score
  CLI::App* score = app.add_subcommand(
      "score", "Score hypothesis lines against reference lines");
  std::string sc_config, sc_metric, sc_hyp, sc_ref;
  bool sc_strip = false;
  score->add_option("--config", sc_config, "JSON config file");
  score->add_option("--metric", sc_metric, "bleu or wer");
  score->add_option("--hyp", sc_hyp, "Hypothesis file");
  score->add_option("--ref", sc_ref, "Reference file");
  score->add_flag("--strip-ids", sc_strip,
                  "Drop a leading id<TAB> column from hypotheses");

  // experiment
  CLI::App* experiment = app.add_subcommand(
      "experiment", "Run a comparison grid and assert its trends");
  std::string ex_config, ex_manifest, ex_out;
  int ex_workers = 0;
  std::uint64_t ex_seed = 0;
  bool ex_smoke = false, ex_full = false, ex_skip_trends = false;
  experiment->add_option("--config,--manifest", ex_manifest,
                         "Manifest JSON file");
  experiment->add_flag("--smoke", ex_smoke, "Built-in reduced grid");
  experiment->add_flag("--full", ex_full, "Built-in full grid");
  experiment->add_option("--out", ex_out, "Output directory");
  experiment->add_option("--workers", ex_workers, "Concurrent cells");
  experiment->add_option("--seed", ex_seed, "Manifest seed");
  experiment->add_flag("--skip-trends", ex_skip_trends,
                       "Run cells without asserting trends");

  // assert-trends
  CLI::App* assert_cmd = app.add_subcommand(
      "assert-trends", "Evaluate trend predicates over finished results");
  std::string at_config, at_results, at_trends, at_builtin;
  assert_cmd->add_option("--config", at_config, "JSON config file");
  assert_cmd->add_option("--results", at_results, "results.json path");
  assert_cmd->add_option("--trends", at_trends, "Trend spec JSON file");
  assert_cmd->add_option("--builtin", at_builtin, "full or smoke");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      nlohmann::json opts = config_base(SynthConfig{}.to_json(), synth_config);
      set_if(*synth, "--out", &opts, "out", synth_out);
      set_if(*synth, "--n-train", &opts, "n_train", s_n_train);
      set_if(*synth, "--n-dev", &opts, "n_dev", s_n_dev);
      set_if(*synth, "--n-test", &opts, "n_test", s_n_test);
      set_if(*synth, "--n-phones", &opts, "n_phones", s_n_phones);
      set_if(*synth, "--feat-dim", &opts, "feat_dim", s_feat_dim);
      set_if(*synth, "--lexicon-size", &opts, "lexicon_size", s_lexicon);
      set_if(*synth, "--n-speakers", &opts, "n_speakers", s_speakers);
      set_if(*synth, "--noise-sigma", &opts, "noise_sigma", s_noise);
      set_if(*synth, "--reorder-prob", &opts, "reorder_prob", s_reorder);
      set_if(*synth, "--seed", &opts, "seed", s_seed);
      return cmd_synth(*synth, opts);
    }
    if (align->parsed()) {
      nlohmann::json opts = config_base(nlohmann::json::object(), align_config);
      set_if(*align, "--corpus", &opts, "corpus", align_corpus);
      set_if(*align, "--tier", &opts, "tier", align_tier);
      set_if(*align, "--split", &opts, "split", align_split);
      set_if(*align, "--out", &opts, "out", align_out);
      return cmd_align(opts);
    }
    if (bpe->parsed()) {
      nlohmann::json opts = config_base(nlohmann::json::object(), bpe_config);
      set_if(*bpe, "--input", &opts, "input", bpe_input);
      set_if(*bpe, "--merges", &opts, "merges", bpe_merges);
      set_if(*bpe, "--out", &opts, "out", bpe_out);
      set_if(*bpe, "--model", &opts, "model", bpe_model);
      return cmd_bpe(opts);
    }
    if (train->parsed()) {
      nlohmann::json opts = config_base(RunConfig{}.to_json(), tr_config);
      set_if(*train, "--variant", &opts, "variant", tr_variant);
      set_if(*train, "--corpus-dir", &opts, "corpus_dir", tr_corpus_dir);
      set_if(*train, "--tier", &opts, "tier", tr_tier);
      set_if(*train, "--train-fraction", &opts, "train_fraction", tr_fraction);
      set_if(*train, "--seed", &opts, "seed", tr_seed);
      set_if(*train, "--out-dir", &opts, "out_dir", tr_out_dir);
      set_if(*train, "--max-epochs", &opts, "max_epochs", tr_epochs);
      set_if(*train, "--frame-budget", &opts, "frame_budget", tr_budget);
      set_if(*train, "--bpe-merges", &opts, "bpe_merges", tr_merges);
      set_if(*train, "--lr", &opts, "initial_lr", tr_lr);
      set_if(*train, "--val-beam", &opts, "val_beam", tr_beam);
      set_if(*train, "--collapse-phones", &opts, "collapse_phones",
             tr_collapse);
      set_arch_if(*train, "--hidden", &opts, "hidden", tr_hidden);
      set_arch_if(*train, "--attn-units", &opts, "attn_units", tr_attn);
      set_arch_if(*train, "--embed-dim", &opts, "embed_dim", tr_embed);
      set_arch_if(*train, "--dropout", &opts, "dropout", tr_dropout);
      set_arch_if(*train, "--label-smoothing", &opts, "label_smoothing",
                  tr_smoothing);
      return cmd_train(opts);
    }
    if (translate->parsed()) {
      nlohmann::json opts = config_base(nlohmann::json::object(), dec_config);
      set_if(*translate, "--run-dir", &opts, "run_dir", dec_run_dir);
      set_if(*translate, "--split", &opts, "split", dec_split);
      set_if(*translate, "--beam", &opts, "beam", dec_beam);
      set_if(*translate, "--alpha", &opts, "alpha", dec_alpha);
      set_if(*translate, "--max-len", &opts, "max_len", dec_max_len);
      set_if(*translate, "--out", &opts, "out", dec_out);
      return cmd_translate(opts);
    }
    if (cascade->parsed()) {
      nlohmann::json opts = config_base(nlohmann::json::object(), cas_config);
      set_if(*cascade, "--stage1-dir", &opts, "stage1_dir", cas_s1);
      set_if(*cascade, "--stage2-dir", &opts, "stage2_dir", cas_s2);
      set_if(*cascade, "--split", &opts, "split", cas_split);
      set_if(*cascade, "--beam", &opts, "beam", cas_beam);
      set_if(*cascade, "--alpha", &opts, "alpha", cas_alpha);
      set_if(*cascade, "--max-len", &opts, "max_len", cas_max_len);
      set_if(*cascade, "--out", &opts, "out", cas_out);
      return cmd_cascade(opts);
    }
    if (score->parsed()) {
      nlohmann::json opts = config_base(nlohmann::json::object(), sc_config);
      set_if(*score, "--metric", &opts, "metric", sc_metric);
      set_if(*score, "--hyp", &opts, "hyp", sc_hyp);
      set_if(*score, "--ref", &opts, "ref", sc_ref);
      if (sc_strip) opts["strip_ids"] = true;
      return cmd_score(opts);
    }
    if (experiment->parsed()) {
      nlohmann::json opts = nlohmann::json::object();
      set_if(*experiment, "--out", &opts, "out", ex_out);
      set_if(*experiment, "--workers", &opts, "workers", ex_workers);
      set_if(*experiment, "--seed", &opts, "seed", ex_seed);
      return cmd_experiment(opts, ex_manifest, ex_smoke, ex_full,
                            ex_skip_trends);
    }
    if (assert_cmd->parsed()) {
      nlohmann::json opts = config_base(nlohmann::json::object(), at_config);
      set_if(*assert_cmd, "--results", &opts, "results", at_results);
      set_if(*assert_cmd, "--trends", &opts, "trends", at_trends);
      set_if(*assert_cmd, "--builtin", &opts, "builtin", at_builtin);
      return cmd_assert_trends(opts);
    }
  } catch (const std::exception& e) {
    std::cerr << "phonest: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
