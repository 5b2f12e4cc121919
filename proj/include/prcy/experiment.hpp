// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "prcy/nn.hpp"
#include "prcy/recycle.hpp"
#include "prcy/stats.hpp"
#include "prcy/toymodel.hpp"
#include "prcy/types.hpp"
#include "prcy/vocab.hpp"

namespace prcy::experiment {

inline constexpr int kConfigSchemaVersion = 1;

struct ModelGenConfig {
  Index vocab = 512;
  Index dim = 24;
  toy::Nonlinearity g = toy::Nonlinearity::tanh_g;
};

// One experiment: generate a source model and twin target, generate a task,
// tune source prompts (several init strategies x several seeds), recycle every
// checkpoint through every recycler, evaluate against zero-shot / random /
// re-tune baselines, and report.  All randomness is derived from master_seed
// by component label, with optional per-label overrides.
struct ExperimentConfig {
  std::uint64_t master_seed = 0;
  ModelGenConfig model;
  toy::TwinSpec twin;                      // seed field is derived, not read
  toy::TaskGenConfig task;                 // seed field is derived, not read
  toy::PromptTuneConfig tune;              // seed/init fields are derived per trial
  std::vector<toy::InitStrategy> init_strategies = {toy::InitStrategy::random};
  int seeds_per_strategy = 3;
  std::vector<recycle::Kind> recyclers = {recycle::Kind::v2v_lin};
  bool recycler_affine = false;
  vocab::VocabSubsetSpec vocab_spec;       // allowlist loaded from allowlist_path
  std::string allowlist_path;
  nn::MlpTrainConfig nn_recycler;          // seed field is derived, not read
  stats::RandomPromptConfig baseline;      // prompt_length synced to tune; seed derived
  std::vector<double> sigma_grid{stats::kDefaultSigmaGrid.begin(),
                                 stats::kDefaultSigmaGrid.end()};
  bool run_sigma_grid = false;
  std::map<std::string, std::uint64_t> seed_overrides;
};

// Parses and validates a config, reporting problems with their field path.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Seed derivation used throughout the run: override-aware, label-keyed.
std::uint64_t seed_for(const ExperimentConfig& cfg, const std::string& label,
                       std::uint64_t index = 0);

// One evaluated (recycler, strategy, seed, checkpoint) cell.
struct TrialRecord {
  std::string recycler;
  std::string init;
  int trial = 0;
  std::uint64_t checkpoint = 0;
  double source_acc = 0.0;    // source prompt on the source model
  double recycled_acc = 0.0;  // recycled prompt on the target model
  double retuned_acc = 0.0;   // re-tune headroom: tuned directly on the target
};

// Everything needed to rebuild the report without re-running the pipeline.
struct RunArtifacts {
  std::string source_id;
  std::string target_id;
  std::string task_id;
  double zero_shot_source = 0.0;
  double zero_shot_target = 0.0;
  stats::BaselineStats baseline;
  std::vector<double> baseline_accuracies;
  std::vector<TrialRecord> trials;
  bool has_grid = false;
  stats::SigmaGridResult grid;
};

struct ResultRow {
  std::string source_model;
  std::string target_model;
  std::string recycler;
  std::string init;
  std::uint64_t checkpoint = 0;
  std::size_t n = 0;  // trials aggregated into this row
  double acc_mean = 0.0, acc_sd = 0.0;
  double source_mean = 0.0, source_sd = 0.0;
  double retune_mean = 0.0, retune_sd = 0.0;
  double zero_shot = 0.0;
  double random_mean = 0.0, random_sd = 0.0;
  double frac_gt_zs = 0.0;      // fraction of trials strictly above zero-shot
  double frac_gt_random = 0.0;  // fraction strictly above the random-prompt mean
  bool welch_defined = false;   // false when n < 2 or both variances vanish
  double welch_t = 0.0, welch_df = 0.0, welch_p = 0.0;
  bool significant = false;     // welch_defined && p < 0.05
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

// Reliability-vs-checkpoint summary, pooled over init strategies and seeds.
struct ReliabilityRow {
  std::string recycler;
  std::uint64_t checkpoint = 0;
  std::size_t n = 0;
  double frac_gt_zs = 0.0;
  double frac_gt_random = 0.0;
};

// Runs the full pipeline, writing every artifact under out_dir:
//   models/source.*  models/target.*  models/twin_g.prcy  task.json
//   prompts/src-<init>-k<seed>-s<step>.*   (tuned source checkpoints)
//   prompts/tgt-<init>-k<seed>-s<step>.*   (re-tune headroom checkpoints)
//   recyclers/<kind>.*  recycled/<kind>-<init>-k<seed>-s<step>.*
//   trials.json  results.json  results.csv  reliability.csv
// threads parallelizes baseline draws; the result is thread-count invariant.
RunArtifacts run_experiment(const ExperimentConfig& cfg,
                            const std::filesystem::path& out_dir, int threads = 1,
                            bool verbose = false);

ResultTable build_table(const RunArtifacts& run);
std::vector<ReliabilityRow> build_reliability(const RunArtifacts& run);

void write_artifacts_json(const RunArtifacts& run, const std::filesystem::path& path);
RunArtifacts load_artifacts_json(const std::filesystem::path& path);

void write_results_json(const RunArtifacts& run, const ResultTable& table,
                        const std::vector<ReliabilityRow>& reliability,
                        const std::filesystem::path& path);
void write_results_csv(const ResultTable& table, const std::filesystem::path& path);
void write_reliability_csv(const std::vector<ReliabilityRow>& rows,
                           const std::filesystem::path& path);

// Rebuilds results.json / results.csv / reliability.csv from trials.json,
// bit-identically to what run_experiment wrote.
ResultTable report_from_artifacts(const std::filesystem::path& out_dir);

// Locale-independent shortest-round-trip formatting used in every CSV cell.
std::string format_double(double v);

}  // namespace prcy::experiment
