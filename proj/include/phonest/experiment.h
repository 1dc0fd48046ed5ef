// include/phonest/experiment.h

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

#ifndef PHONEST_EXPERIMENT_H_
#define PHONEST_EXPERIMENT_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "phonest/trainer.h"

namespace phonest {

// A cell override: every grid cell whose fields equal all present `match`
// keys ("variant", "tier", "size", "seed") gets `run` merge-patched into its
// run config.
struct CellOverride {
  nlohmann::json match = nlohmann::json::object();
  nlohmann::json run = nlohmann::json::object();
};

// A cell family outside the variant axis, still crossed with sizes and
// seeds: `run` must carry a "variant" and may flip any run field (for
// instance frame-level phone input); rows report it under `label`.
struct ExtraCellSpec {
  std::string label;
  nlohmann::json run = nlohmann::json::object();
  std::vector<std::string> tiers;  // empty: gold only
};

// The comparison grid: variants x train sizes x phone-quality tiers x
// seeds. Variants that never look at phone labels are pinned to gold
// instead of duplicating across tiers. A variant entry of the form
// "stage1+stage2" trains both stages and scores their cascade.
struct ExperimentManifest {
  int version = 1;
  std::uint64_t seed = 17;  // per-cell run seeds derive from this + cell key
  SynthConfig synth;
  std::string corpus_dir;  // when set, cells load this instead of synthesizing
  std::vector<std::string> variants;
  std::vector<double> sizes = {1.0};  // fractions; > 1 means utterance count
  std::vector<std::string> tiers = {"gold"};
  std::vector<std::uint64_t> seeds = {1};
  // RunConfig fields applied to every cell
  nlohmann::json run = nlohmann::json::object();
  std::vector<CellOverride> overrides;
  std::vector<ExtraCellSpec> extra_cells;
  std::string baseline = "baseline_e2e";  // delta column reference
  std::string out_dir;
  int workers = 1;
  // Trend list for assert_trends, may be empty.
  nlohmann::json trends = nlohmann::json::array();

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentManifest from_json(const nlohmann::json& j);
};

struct MetricsRow {
  std::string variant;  // display label; cascades read "stage1+stage2"
  double size = 1.0;    // train fraction
  std::string tier;
  std::uint64_t seed = 0;  // manifest repeat seed
  double dev_bleu = 0.0;
  double test_bleu = 0.0;
  std::string stage1_metric;  // "wer", "phone_acc", or empty
  double stage1_value = 0.0;
  int epochs_to_best = 0;
  double wall_time_s = 0.0;  // reported only in the timing sidecar

  nlohmann::json to_json() const;  // excludes wall time
  static MetricsRow from_json(const nlohmann::json& j);
};

struct CellFailure {
  std::string key;
  std::string error;
};

struct ExperimentResults {
  std::vector<MetricsRow> rows;  // cell construction order
  std::vector<CellFailure> failures;
  int computed = 0;
  int resumed = 0;
};

// TSV with a fixed column order plus the delta of each row's test BLEU
// against the baseline variant's seed-mean at the same size.
std::string results_tsv(const std::vector<MetricsRow>& rows,
                        const std::string& baseline);
nlohmann::json results_json(const ExperimentResults& results,
                            const std::string& baseline);

// Runs every cell (skipping those whose metrics.json already exists), then
// writes results.tsv, results.json, and timing.tsv under the output
// directory. Cell failures are recorded and do not stop other cells.
ExperimentResults run_experiment(const ExperimentManifest& manifest);

// One trend predicate over seed-mean test BLEU. Kinds:
//   "dominates":      better > worse at every size; optional "widening"
//                     (gap at the smallest size >= gap at the largest) or
//                     "gap_largest_at_smallest" (>= every other size).
//   "tier_monotonic": BLEU non-increasing along the listed tier order.
// Every comparison must clear `tolerance` (default 0). A referenced cell
// with no rows makes the trend unevaluable rather than failed.
struct TrendOutcome {
  std::string name;
  std::string description;
  std::string status;  // "pass", "fail", "unevaluable"
  double margin = 0.0; // smallest clearance over the trend's comparisons
  std::string details;
};

struct TrendReport {
  std::vector<TrendOutcome> trends;
  bool all_evaluable_pass = true;
  bool any_unevaluable = false;

  std::string to_text() const;
  nlohmann::json to_json() const;
};

TrendReport assert_trends(const std::vector<MetricsRow>& rows,
                          const nlohmann::json& trend_spec);

std::vector<MetricsRow> rows_from_results_json(const nlohmann::json& j);

// Reloads two finished training runs and scores their cascade on one split
// of stage 1's corpus. Stage 1 must have trained transcript targets and
// stage 2 must be the text translation variant. Non-positive beam settings
// fall back to each run's validation settings.
struct CascadePipe {
  double bleu = 0.0;
  double stage1_wer = 0.0;
  std::vector<std::string> ids;
  std::vector<std::string> hyp_texts;
};
CascadePipe cascade_from_dirs(const std::string& stage1_dir,
                              const std::string& stage2_dir,
                              const std::string& split, int beam = 0,
                              double alpha = -1.0, int max_len = 0);

// The paper-shaped grids on the synthetic corpus. The full manifest covers
// trends a-d with three seeds; the smoke manifest shrinks the corpus to 500
// train utterances, one seed, and trends a-c.
ExperimentManifest full_manifest(const std::string& out_dir);
ExperimentManifest smoke_manifest(const std::string& out_dir);
nlohmann::json paper_trends(bool include_redundancy);

}  // namespace phonest

#endif  // PHONEST_EXPERIMENT_H_
