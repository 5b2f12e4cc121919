// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#include "prcy/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "prcy/matio.hpp"
#include "prcy/rng.hpp"
#include "prcy/store.hpp"

namespace prcy::experiment {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw UsageError("config: " + path + ": " + what);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_error(path.empty() ? "(top level)" : path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
          return it.key() == k;
        }) == allowed.end()) {
      config_error(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
    }
  }
}

template <typename T>
T get_or(const json& j, const std::string& path, const char* key, T dflt) {
  if (!j.contains(key)) return dflt;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(path.empty() ? key : path + "." + key, "wrong type");
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw DataError("write failed: " + path.string());
}

template <typename T>
T need(const json& j, const std::filesystem::path& file, const char* key) {
  if (!j.contains(key)) {
    throw DataError(file.string() + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(file.string() + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "", {"schema_version", "master_seed", "model", "twin", "task", "tune",
                     "init_strategies", "seeds_per_strategy", "recyclers",
                     "recycler_affine", "vocab", "nn_recycler", "baseline", "sigma_grid",
                     "run_sigma_grid", "seed_overrides"});

  const int schema = get_or<int>(j, "", "schema_version", kConfigSchemaVersion);
  if (schema != kConfigSchemaVersion) {
    config_error("schema_version", "unsupported version " + std::to_string(schema));
  }

  ExperimentConfig cfg;
  cfg.master_seed = get_or<std::uint64_t>(j, "", "master_seed", 0);

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model", {"vocab", "dim", "nonlinearity"});
    cfg.model.vocab = get_or<Index>(m, "model", "vocab", cfg.model.vocab);
    cfg.model.dim = get_or<Index>(m, "model", "dim", cfg.model.dim);
    cfg.model.g = toy::parse_nonlinearity(
        get_or<std::string>(m, "model", "nonlinearity", toy::to_string(cfg.model.g)));
    if (cfg.model.vocab < 8) config_error("model.vocab", "must be >= 8");
    if (cfg.model.dim < 2) config_error("model.dim", "must be >= 2");
  }

  if (j.contains("twin")) {
    const json& t = j.at("twin");
    check_keys(t, "twin", {"mode", "eta"});
    cfg.twin.mode =
        toy::parse_twin_mode(get_or<std::string>(t, "twin", "mode", to_string(cfg.twin.mode)));
    cfg.twin.eta = get_or<double>(t, "twin", "eta", cfg.twin.eta);
    if (cfg.twin.eta < 0.0) config_error("twin.eta", "must be >= 0");
    if (cfg.twin.mode == toy::TwinSpec::Mode::exact && cfg.twin.eta != 0.0) {
      config_error("twin.eta", "must be 0 in exact mode");
    }
  }

  if (j.contains("task")) {
    const json& t = j.at("task");
    check_keys(t, "task", {"classes", "train_examples", "eval_examples",
                           "tokens_per_example", "separation", "distractor_rate", "band",
                           "retry_cap"});
    cfg.task.classes = get_or<int>(t, "task", "classes", cfg.task.classes);
    cfg.task.train_examples = get_or<int>(t, "task", "train_examples", cfg.task.train_examples);
    cfg.task.eval_examples = get_or<int>(t, "task", "eval_examples", cfg.task.eval_examples);
    cfg.task.tokens_per_example =
        get_or<int>(t, "task", "tokens_per_example", cfg.task.tokens_per_example);
    cfg.task.separation = get_or<double>(t, "task", "separation", cfg.task.separation);
    cfg.task.distractor_rate =
        get_or<double>(t, "task", "distractor_rate", cfg.task.distractor_rate);
    cfg.task.retry_cap = get_or<int>(t, "task", "retry_cap", cfg.task.retry_cap);
    if (t.contains("band")) {
      const auto band = get_or<std::vector<double>>(t, "task", "band", {});
      if (band.size() != 2) config_error("task.band", "expected [lo, hi]");
      cfg.task.band_lo = band[0];
      cfg.task.band_hi = band[1];
    }
    if (cfg.task.classes < 2) config_error("task.classes", "must be >= 2");
  }

  if (j.contains("tune")) {
    const json& t = j.at("tune");
    check_keys(t, "tune", {"prompt_length", "steps", "batch_size", "learning_rate",
                           "checkpoints", "wayward_gamma", "wayward_anchor",
                           "allow_anchor_truncation", "spot_pretune_steps"});
    cfg.tune.prompt_length = get_or<Index>(t, "tune", "prompt_length", cfg.tune.prompt_length);
    cfg.tune.steps = get_or<int>(t, "tune", "steps", cfg.tune.steps);
    cfg.tune.batch_size = get_or<int>(t, "tune", "batch_size", cfg.tune.batch_size);
    cfg.tune.learning_rate = get_or<double>(t, "tune", "learning_rate", cfg.tune.learning_rate);
    cfg.tune.checkpoint_steps =
        get_or<std::vector<std::uint64_t>>(t, "tune", "checkpoints", cfg.tune.checkpoint_steps);
    cfg.tune.wayward_gamma = get_or<double>(t, "tune", "wayward_gamma", cfg.tune.wayward_gamma);
    cfg.tune.wayward_anchor =
        get_or<std::vector<std::size_t>>(t, "tune", "wayward_anchor", cfg.tune.wayward_anchor);
    cfg.tune.allow_anchor_truncation = get_or<bool>(t, "tune", "allow_anchor_truncation",
                                                    cfg.tune.allow_anchor_truncation);
    cfg.tune.spot_pretune_steps =
        get_or<int>(t, "tune", "spot_pretune_steps", cfg.tune.spot_pretune_steps);
    if (cfg.tune.prompt_length < 1) config_error("tune.prompt_length", "must be >= 1");
    if (cfg.tune.steps < 1) config_error("tune.steps", "must be >= 1");
    if (cfg.tune.batch_size < 1) config_error("tune.batch_size", "must be >= 1");
    if (cfg.tune.learning_rate <= 0.0) config_error("tune.learning_rate", "must be > 0");
  }

  if (j.contains("init_strategies")) {
    cfg.init_strategies.clear();
    for (const auto& name : get_or<std::vector<std::string>>(j, "", "init_strategies", {})) {
      cfg.init_strategies.push_back(toy::parse_init_strategy(name));
    }
  }
  if (cfg.init_strategies.empty()) config_error("init_strategies", "must be non-empty");

  cfg.seeds_per_strategy = get_or<int>(j, "", "seeds_per_strategy", cfg.seeds_per_strategy);
  if (cfg.seeds_per_strategy < 1) config_error("seeds_per_strategy", "must be >= 1");

  if (j.contains("recyclers")) {
    cfg.recyclers.clear();
    for (const auto& name : get_or<std::vector<std::string>>(j, "", "recyclers", {})) {
      cfg.recyclers.push_back(recycle::parse_kind(name));
    }
  }
  if (cfg.recyclers.empty()) config_error("recyclers", "must be non-empty");
  cfg.recycler_affine = get_or<bool>(j, "", "recycler_affine", cfg.recycler_affine);

  if (j.contains("vocab")) {
    const json& v = j.at("vocab");
    check_keys(v, "vocab", {"skip", "take", "allowlist"});
    cfg.vocab_spec.skip = get_or<std::size_t>(v, "vocab", "skip", cfg.vocab_spec.skip);
    cfg.vocab_spec.take = get_or<std::size_t>(v, "vocab", "take", cfg.vocab_spec.take);
    cfg.allowlist_path = get_or<std::string>(v, "vocab", "allowlist", cfg.allowlist_path);
    if (cfg.vocab_spec.take == 0) config_error("vocab.take", "must be >= 1");
  }

  if (j.contains("nn_recycler")) {
    const json& n = j.at("nn_recycler");
    check_keys(n, "nn_recycler", {"epochs", "batch_size", "learning_rate"});
    cfg.nn_recycler.epochs = get_or<int>(n, "nn_recycler", "epochs", cfg.nn_recycler.epochs);
    cfg.nn_recycler.batch_size =
        get_or<int>(n, "nn_recycler", "batch_size", cfg.nn_recycler.batch_size);
    cfg.nn_recycler.learning_rate =
        get_or<double>(n, "nn_recycler", "learning_rate", cfg.nn_recycler.learning_rate);
    if (cfg.nn_recycler.epochs < 1) config_error("nn_recycler.epochs", "must be >= 1");
    if (cfg.nn_recycler.batch_size < 1) config_error("nn_recycler.batch_size", "must be >= 1");
    if (cfg.nn_recycler.learning_rate <= 0.0) {
      config_error("nn_recycler.learning_rate", "must be > 0");
    }
  }

  if (j.contains("baseline")) {
    const json& b = j.at("baseline");
    check_keys(b, "baseline", {"sigma", "draws"});
    cfg.baseline.sigma = get_or<double>(b, "baseline", "sigma", cfg.baseline.sigma);
    cfg.baseline.draws = get_or<int>(b, "baseline", "draws", cfg.baseline.draws);
    if (!(cfg.baseline.sigma > 0.0)) config_error("baseline.sigma", "must be > 0");
    if (cfg.baseline.draws < 2) config_error("baseline.draws", "must be >= 2");
  }

  if (j.contains("sigma_grid")) {
    cfg.sigma_grid = get_or<std::vector<double>>(j, "", "sigma_grid", cfg.sigma_grid);
    if (cfg.sigma_grid.empty()) config_error("sigma_grid", "must be non-empty");
    for (double s : cfg.sigma_grid) {
      if (!(s > 0.0)) config_error("sigma_grid", "entries must be > 0");
    }
  }
  cfg.run_sigma_grid = get_or<bool>(j, "", "run_sigma_grid", cfg.run_sigma_grid);

  if (j.contains("seed_overrides")) {
    const json& s = j.at("seed_overrides");
    if (!s.is_object()) config_error("seed_overrides", "expected an object");
    for (auto it = s.begin(); it != s.end(); ++it) {
      try {
        cfg.seed_overrides[it.key()] = it.value().get<std::uint64_t>();
      } catch (const json::exception&) {
        config_error("seed_overrides." + it.key(), "wrong type");
      }
    }
  }

  const bool wants_wayward =
      std::find(cfg.init_strategies.begin(), cfg.init_strategies.end(),
                toy::InitStrategy::wayward) != cfg.init_strategies.end();
  if (wants_wayward && cfg.tune.wayward_anchor.empty()) {
    config_error("tune.wayward_anchor", "required when init_strategies includes wayward");
  }
  const bool wants_class =
      std::find(cfg.init_strategies.begin(), cfg.init_strategies.end(),
                toy::InitStrategy::class_based) != cfg.init_strategies.end();
  if (wants_class && cfg.tune.prompt_length < cfg.task.classes) {
    config_error("tune.prompt_length", "must be >= task.classes for the class init");
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::uint64_t seed_for(const ExperimentConfig& cfg, const std::string& label,
                       std::uint64_t index) {
  const auto it = cfg.seed_overrides.find(label);
  const std::uint64_t base =
      it != cfg.seed_overrides.end() ? it->second : cfg.master_seed;
  return rng::derive(base, label, index);
}

RunArtifacts run_experiment(const ExperimentConfig& cfg,
                            const std::filesystem::path& out_dir, int threads,
                            bool verbose) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "models");
  fs::create_directories(out_dir / "prompts");
  fs::create_directories(out_dir / "recyclers");
  fs::create_directories(out_dir / "recycled");

  const auto log = [&](const std::string& msg) {
    if (verbose) std::cerr << "[run] " << msg << '\n';
  };

  const toy::ToyModel src = toy::make_model(cfg.model.vocab, cfg.model.dim, cfg.model.g,
                                            seed_for(cfg, "model"), "source");
  toy::TwinSpec tspec = cfg.twin;
  tspec.seed = seed_for(cfg, "twin");
  const toy::TwinResult tw = toy::make_twin(src, tspec);

  toy::TaskGenConfig tcfg = cfg.task;
  tcfg.seed = seed_for(cfg, "task");
  const toy::SyntheticTask task = toy::make_task(src, tcfg);
  log("task " + task.id + " generated");

  store::save_model(out_dir / "models" / "source", src);
  store::save_model(out_dir / "models" / "target", tw.twin);
  matio::save_matrix(out_dir / "models" / "twin_g.prcy", tw.g);
  store::save_task(out_dir / "task.json", task);

  RunArtifacts run;
  run.source_id = src.id;
  run.target_id = tw.twin.id;
  run.task_id = task.id;
  run.zero_shot_source = toy::zero_shot_eval(src, task);
  run.zero_shot_target = toy::zero_shot_eval(tw.twin, task);
  log("zero-shot source " + format_double(run.zero_shot_source) + ", target " +
      format_double(run.zero_shot_target));

  vocab::VocabSubsetSpec vspec = cfg.vocab_spec;
  if (!cfg.allowlist_path.empty()) {
    vspec.allowlist = matio::load_allowlist(cfg.allowlist_path);
  }
  const auto [v_s, v_t] = vocab::paired_training_matrices(src.table, tw.twin.table, vspec);

  std::vector<recycle::FittedRecycler> fitted;
  for (recycle::Kind kind : cfg.recyclers) {
    recycle::FittedRecycler r;
    switch (kind) {
      case recycle::Kind::v2v_lin:
        r = recycle::fit_v2v_lin(v_s, v_t, cfg.recycler_affine);
        break;
      case recycle::Kind::v2v_nn: {
        nn::MlpTrainConfig ncfg = cfg.nn_recycler;
        ncfg.seed = seed_for(cfg, "nn-recycler");
        r = recycle::fit_v2v_nn(v_s, v_t, ncfg);
        break;
      }
      case recycle::Kind::lin_comb:
        r = recycle::fit_lin_comb(v_s, v_t);
        break;
    }
    r.source_id = src.id;
    r.target_id = tw.twin.id;
    store::save_recycler(out_dir / "recyclers" / recycle::to_string(kind), r);
    log("fitted " + recycle::to_string(kind));
    fitted.push_back(std::move(r));
  }

  for (toy::InitStrategy strategy : cfg.init_strategies) {
    const std::string tag = toy::to_string(strategy);
    for (int k = 0; k < cfg.seeds_per_strategy; ++k) {
      toy::PromptTuneConfig tune = cfg.tune;
      tune.init = strategy;
      tune.seed = seed_for(cfg, "tune-" + tag, static_cast<std::uint64_t>(k));
      const toy::TuneResult src_tr = toy::prompt_tune(src, task, tune);

      toy::PromptTuneConfig retune = tune;
      retune.seed = seed_for(cfg, "retune-" + tag, static_cast<std::uint64_t>(k));
      const toy::TuneResult tgt_tr = toy::prompt_tune(tw.twin, task, retune);

      std::map<std::uint64_t, double> retuned;
      for (const Prompt& cp : tgt_tr.checkpoints) {
        const std::string stem =
            tag + "-k" + std::to_string(k) + "-s" + std::to_string(cp.train_step);
        store::save_prompt(out_dir / "prompts" / ("tgt-" + stem), cp);
        retuned[cp.train_step] = toy::eval_accuracy(tw.twin, cp, task, toy::Split::eval);
      }

      for (const Prompt& cp : src_tr.checkpoints) {
        const std::string stem =
            tag + "-k" + std::to_string(k) + "-s" + std::to_string(cp.train_step);
        store::save_prompt(out_dir / "prompts" / ("src-" + stem), cp);
        const double source_acc = toy::eval_accuracy(src, cp, task, toy::Split::eval);
        for (std::size_t ri = 0; ri < fitted.size(); ++ri) {
          const Prompt rec = recycle::apply_recycler(fitted[ri], cp);
          const std::string kind_name = recycle::to_string(cfg.recyclers[ri]);
          store::save_prompt(out_dir / "recycled" / (kind_name + "-" + stem), rec);
          TrialRecord trial;
          trial.recycler = kind_name;
          trial.init = tag;
          trial.trial = k;
          trial.checkpoint = cp.train_step;
          trial.source_acc = source_acc;
          trial.recycled_acc = toy::eval_accuracy(tw.twin, rec, task, toy::Split::eval);
          trial.retuned_acc = retuned.at(cp.train_step);
          run.trials.push_back(std::move(trial));
        }
      }
      log("tuned " + tag + " seed " + std::to_string(k));
    }
  }

  stats::RandomPromptConfig bcfg = cfg.baseline;
  bcfg.prompt_length = cfg.tune.prompt_length;
  bcfg.seed = seed_for(cfg, "baseline");
  run.baseline_accuracies = stats::random_baseline_accuracies(tw.twin, task, bcfg, threads);
  run.baseline.sigma = bcfg.sigma;
  run.baseline.accuracy = stats::summarize(run.baseline_accuracies);
  log("baseline mean " + format_double(run.baseline.accuracy.mean));

  if (cfg.run_sigma_grid) {
    run.has_grid = true;
    run.grid = stats::sigma_grid_search(tw.twin, task, bcfg, cfg.sigma_grid, threads);
    log("grid best sigma " + format_double(run.grid.best_sigma));
  }

  write_artifacts_json(run, out_dir / "trials.json");
  const ResultTable table = build_table(run);
  const auto reliability = build_reliability(run);
  write_results_json(run, table, reliability, out_dir / "results.json");
  write_results_csv(table, out_dir / "results.csv");
  write_reliability_csv(reliability, out_dir / "reliability.csv");
  return run;
}

namespace {

// Distinct values in first-seen order (trials are pushed in config order, so
// this reconstructs config order from the artifact alone).
std::vector<std::string> ordered_values(const std::vector<TrialRecord>& trials,
                                        std::string TrialRecord::* field) {
  std::vector<std::string> out;
  for (const auto& t : trials) {
    if (std::find(out.begin(), out.end(), t.*field) == out.end()) out.push_back(t.*field);
  }
  return out;
}

}  // namespace

ResultTable build_table(const RunArtifacts& run) {
  const auto recyclers = ordered_values(run.trials, &TrialRecord::recycler);
  const auto inits = ordered_values(run.trials, &TrialRecord::init);
  std::set<std::uint64_t> steps;
  for (const auto& t : run.trials) steps.insert(t.checkpoint);

  stats::SummaryStats baseline = run.baseline.accuracy;

  ResultTable table;
  for (const auto& recycler : recyclers) {
    for (const auto& init : inits) {
      for (std::uint64_t step : steps) {
        std::vector<double> accs, source_accs, retuned_accs;
        for (const auto& t : run.trials) {
          if (t.recycler == recycler && t.init == init && t.checkpoint == step) {
            accs.push_back(t.recycled_acc);
            source_accs.push_back(t.source_acc);
            retuned_accs.push_back(t.retuned_acc);
          }
        }
        if (accs.empty()) continue;

        ResultRow row;
        row.source_model = run.source_id;
        row.target_model = run.target_id;
        row.recycler = recycler;
        row.init = init;
        row.checkpoint = step;
        row.n = accs.size();

        const auto a = stats::summarize(accs);
        const auto s = stats::summarize(source_accs);
        const auto r = stats::summarize(retuned_accs);
        row.acc_mean = a.mean;
        row.acc_sd = a.sd;
        row.source_mean = s.mean;
        row.source_sd = s.sd;
        row.retune_mean = r.mean;
        row.retune_sd = r.sd;
        row.zero_shot = run.zero_shot_target;
        row.random_mean = baseline.mean;
        row.random_sd = baseline.sd;
        row.frac_gt_zs = stats::fraction_above(accs, run.zero_shot_target);
        row.frac_gt_random = stats::fraction_above(accs, baseline.mean);

        if (a.n >= 2) {
          try {
            const auto w = stats::welch_t_from_stats(a, baseline);
            row.welch_defined = true;
            row.welch_t = w.t;
            row.welch_df = w.df;
            row.welch_p = w.p;
            row.significant = w.significant();
          } catch (const NumericError&) {
            row.welch_defined = false;  // both variances zero: leave cells empty
          }
        }
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

std::vector<ReliabilityRow> build_reliability(const RunArtifacts& run) {
  const auto recyclers = ordered_values(run.trials, &TrialRecord::recycler);
  std::set<std::uint64_t> steps;
  for (const auto& t : run.trials) steps.insert(t.checkpoint);

  std::vector<ReliabilityRow> rows;
  for (const auto& recycler : recyclers) {
    for (std::uint64_t step : steps) {
      std::vector<double> accs;
      for (const auto& t : run.trials) {
        if (t.recycler == recycler && t.checkpoint == step) accs.push_back(t.recycled_acc);
      }
      if (accs.empty()) continue;
      ReliabilityRow row;
      row.recycler = recycler;
      row.checkpoint = step;
      row.n = accs.size();
      row.frac_gt_zs = stats::fraction_above(accs, run.zero_shot_target);
      row.frac_gt_random = stats::fraction_above(accs, run.baseline.accuracy.mean);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

json baseline_to_json(const stats::BaselineStats& b) {
  return json{{"sigma", b.sigma},
              {"draws", b.accuracy.n},
              {"mean", b.accuracy.mean},
              {"sd", b.accuracy.sd}};
}

stats::BaselineStats baseline_from_json(const json& j, const std::filesystem::path& file) {
  stats::BaselineStats b;
  b.sigma = need<double>(j, file, "sigma");
  b.accuracy.n = need<std::size_t>(j, file, "draws");
  b.accuracy.mean = need<double>(j, file, "mean");
  b.accuracy.sd = need<double>(j, file, "sd");
  return b;
}

json grid_to_json(const stats::SigmaGridResult& g) {
  json per = json::array();
  for (const auto& b : g.per_sigma) per.push_back(baseline_to_json(b));
  return json{{"best_sigma", g.best_sigma},
              {"best_mean", g.best.mean},
              {"best_sd", g.best.sd},
              {"per_sigma", std::move(per)}};
}

}  // namespace

void write_artifacts_json(const RunArtifacts& run, const std::filesystem::path& path) {
  json trials = json::array();
  for (const auto& t : run.trials) {
    trials.push_back(json{{"recycler", t.recycler},
                          {"init", t.init},
                          {"trial", t.trial},
                          {"checkpoint", t.checkpoint},
                          {"source_acc", t.source_acc},
                          {"recycled_acc", t.recycled_acc},
                          {"retuned_acc", t.retuned_acc}});
  }
  json j{{"kind", "trials"},
         {"schema_version", kConfigSchemaVersion},
         {"source_id", run.source_id},
         {"target_id", run.target_id},
         {"task_id", run.task_id},
         {"zero_shot", json{{"source", run.zero_shot_source}, {"target", run.zero_shot_target}}},
         {"baseline", baseline_to_json(run.baseline)},
         {"baseline_accuracies", run.baseline_accuracies},
         {"trials", std::move(trials)}};
  if (run.has_grid) j["grid"] = grid_to_json(run.grid);
  write_json_file(path, j);
}

RunArtifacts load_artifacts_json(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  if (need<std::string>(j, path, "kind") != "trials") {
    throw DataError(path.string() + ": not a trials artifact");
  }

  RunArtifacts run;
  run.source_id = need<std::string>(j, path, "source_id");
  run.target_id = need<std::string>(j, path, "target_id");
  run.task_id = need<std::string>(j, path, "task_id");
  const json zs = need<json>(j, path, "zero_shot");
  run.zero_shot_source = need<double>(zs, path, "source");
  run.zero_shot_target = need<double>(zs, path, "target");
  run.baseline = baseline_from_json(need<json>(j, path, "baseline"), path);
  run.baseline_accuracies = need<std::vector<double>>(j, path, "baseline_accuracies");

  for (const json& t : need<json>(j, path, "trials")) {
    TrialRecord trial;
    trial.recycler = need<std::string>(t, path, "recycler");
    trial.init = need<std::string>(t, path, "init");
    trial.trial = need<int>(t, path, "trial");
    trial.checkpoint = need<std::uint64_t>(t, path, "checkpoint");
    trial.source_acc = need<double>(t, path, "source_acc");
    trial.recycled_acc = need<double>(t, path, "recycled_acc");
    trial.retuned_acc = need<double>(t, path, "retuned_acc");
    run.trials.push_back(std::move(trial));
  }

  if (j.contains("grid")) {
    run.has_grid = true;
    const json& g = j.at("grid");
    run.grid.best_sigma = need<double>(g, path, "best_sigma");
    run.grid.best.mean = need<double>(g, path, "best_mean");
    run.grid.best.sd = need<double>(g, path, "best_sd");
    for (const json& b : need<json>(g, path, "per_sigma")) {
      run.grid.per_sigma.push_back(baseline_from_json(b, path));
      run.grid.best.n = std::max(run.grid.best.n, run.grid.per_sigma.back().accuracy.n);
    }
  }
  return run;
}

namespace {

json row_to_json(const ResultRow& r) {
  json j{{"source_model", r.source_model},
         {"target_model", r.target_model},
         {"recycler", r.recycler},
         {"init", r.init},
         {"checkpoint", r.checkpoint},
         {"n", r.n},
         {"acc_mean", r.acc_mean},
         {"acc_sd", r.acc_sd},
         {"source_mean", r.source_mean},
         {"source_sd", r.source_sd},
         {"retune_mean", r.retune_mean},
         {"retune_sd", r.retune_sd},
         {"zero_shot", r.zero_shot},
         {"random_mean", r.random_mean},
         {"random_sd", r.random_sd},
         {"frac_gt_zs", r.frac_gt_zs},
         {"frac_gt_random", r.frac_gt_random},
         {"significant", r.significant}};
  if (r.welch_defined) {
    j["welch_t"] = r.welch_t;
    j["welch_df"] = r.welch_df;
    j["welch_p"] = r.welch_p;
  } else {
    j["welch_t"] = nullptr;
    j["welch_df"] = nullptr;
    j["welch_p"] = nullptr;
  }
  return j;
}

}  // namespace

void write_results_json(const RunArtifacts& run, const ResultTable& table,
                        const std::vector<ReliabilityRow>& reliability,
                        const std::filesystem::path& path) {
  json rows = json::array();
  for (const auto& r : table.rows) rows.push_back(row_to_json(r));
  json rel = json::array();
  for (const auto& r : reliability) {
    rel.push_back(json{{"recycler", r.recycler},
                       {"checkpoint", r.checkpoint},
                       {"n", r.n},
                       {"frac_gt_zs", r.frac_gt_zs},
                       {"frac_gt_random", r.frac_gt_random}});
  }
  json j{{"kind", "results"},
         {"schema_version", kConfigSchemaVersion},
         {"source_id", run.source_id},
         {"target_id", run.target_id},
         {"task_id", run.task_id},
         {"zero_shot", json{{"source", run.zero_shot_source}, {"target", run.zero_shot_target}}},
         {"baseline", baseline_to_json(run.baseline)},
         {"table", std::move(rows)},
         {"reliability", std::move(rel)}};
  if (run.has_grid) j["grid"] = grid_to_json(run.grid);
  write_json_file(path, j);
}

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw NumericError("format_double: conversion failed");
  return std::string(buf, end);
}

void write_results_csv(const ResultTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "source_model,target_model,recycler,init,checkpoint,n,acc_mean,acc_sd,"
         "source_mean,source_sd,retune_mean,retune_sd,zero_shot,random_mean,random_sd,"
         "frac_gt_zs,frac_gt_random,welch_t,welch_df,welch_p,significant\n";
  for (const auto& r : table.rows) {
    out << r.source_model << ',' << r.target_model << ',' << r.recycler << ',' << r.init
        << ',' << r.checkpoint << ',' << r.n << ',' << format_double(r.acc_mean) << ','
        << format_double(r.acc_sd) << ',' << format_double(r.source_mean) << ','
        << format_double(r.source_sd) << ',' << format_double(r.retune_mean) << ','
        << format_double(r.retune_sd) << ',' << format_double(r.zero_shot) << ','
        << format_double(r.random_mean) << ',' << format_double(r.random_sd) << ','
        << format_double(r.frac_gt_zs) << ',' << format_double(r.frac_gt_random) << ',';
    if (r.welch_defined) {
      out << format_double(r.welch_t) << ',' << format_double(r.welch_df) << ','
          << format_double(r.welch_p);
    } else {
      out << ",,";
    }
    out << ',' << (r.significant ? "true" : "false") << '\n';
  }
  out.flush();
  if (!out) throw DataError("write failed: " + path.string());
}

void write_reliability_csv(const std::vector<ReliabilityRow>& rows,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "recycler,checkpoint,n,frac_gt_zs,frac_gt_random\n";
  for (const auto& r : rows) {
    out << r.recycler << ',' << r.checkpoint << ',' << r.n << ','
        << format_double(r.frac_gt_zs) << ',' << format_double(r.frac_gt_random) << '\n';
  }
  out.flush();
  if (!out) throw DataError("write failed: " + path.string());
}

ResultTable report_from_artifacts(const std::filesystem::path& out_dir) {
  const RunArtifacts run = load_artifacts_json(out_dir / "trials.json");
  const ResultTable table = build_table(run);
  const auto reliability = build_reliability(run);
  write_results_json(run, table, reliability, out_dir / "results.json");
  write_results_csv(table, out_dir / "results.csv");
  write_reliability_csv(reliability, out_dir / "reliability.csv");
  return table;
}

}  // namespace prcy::experiment
