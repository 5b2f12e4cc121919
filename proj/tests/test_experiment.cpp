// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <prcy/experiment.hpp>
#include <prcy/rng.hpp>
#include <prcy/store.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace prcy;
using namespace prcy::experiment;
using nlohmann::json;

namespace {

fs::path test_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "prcy_test_experiment";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// A complete desk-scale config that runs in well under a second.
json small_config() {
  return json{
      {"master_seed", 424242},
      {"model", {{"vocab", 96}, {"dim", 8}, {"nonlinearity", "tanh"}}},
      {"twin", {{"mode", "exact"}, {"eta", 0.0}}},
      {"task",
       {{"classes", 2},
        {"train_examples", 32},
        {"eval_examples", 96},
        {"tokens_per_example", 6}}},
      {"tune",
       {{"prompt_length", 4}, {"steps", 20}, {"batch_size", 8}, {"learning_rate", 0.05}}},
      {"init_strategies", {"random", "class"}},
      {"seeds_per_strategy", 2},
      {"recyclers", {"v2v-lin", "lin-comb"}},
      {"vocab", {{"skip", 8}, {"take", 64}}},
      // Sigma well below saturation so random-prompt accuracies stay
      // seed-sensitive at this scale (the seed-isolation subcase needs that).
      {"baseline", {{"sigma", 0.5}, {"draws", 4}}},
  };
}

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  rng::Counter gen(seed);
  Matrix m(rows, cols);
  std::uint64_t k = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = gen.gaussian(k++);
  return m;
}

}  // namespace

TEST_CASE("config: empty object yields the documented defaults") {
  const ExperimentConfig cfg = config_from_json(json::object());
  CHECK(cfg.master_seed == 0);
  CHECK(cfg.model.vocab == 512);
  CHECK(cfg.model.dim == 24);
  CHECK(cfg.model.g == toy::Nonlinearity::tanh_g);
  CHECK(cfg.twin.mode == toy::TwinSpec::Mode::exact);
  CHECK(cfg.twin.eta == 0.0);
  CHECK(cfg.task.classes == 2);
  CHECK(cfg.tune.prompt_length == 8);
  CHECK(cfg.init_strategies ==
        std::vector<toy::InitStrategy>{toy::InitStrategy::random});
  CHECK(cfg.seeds_per_strategy == 3);
  CHECK(cfg.recyclers == std::vector<recycle::Kind>{recycle::Kind::v2v_lin});
  CHECK(cfg.vocab_spec.skip == 1000);
  CHECK(cfg.vocab_spec.take == 4000);
  CHECK(cfg.baseline.sigma == 16.0);
  CHECK(cfg.baseline.draws == 100);
  CHECK(cfg.sigma_grid == std::vector<double>{4.0, 8.0, 16.0, 32.0, 64.0});
  CHECK_FALSE(cfg.run_sigma_grid);
}

TEST_CASE("config: unknown fields are rejected with their path") {
  json j = json::object();
  j["bogus"] = 1;
  CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("bogus"), UsageError);
  json nested = json::object();
  nested["tune"] = {{"stepz", 5}};
  CHECK_THROWS_WITH_AS(config_from_json(nested), doctest::Contains("tune.stepz"),
                       UsageError);
}

TEST_CASE("config: invariant violations name the offending field") {
  CHECK_THROWS_WITH_AS(config_from_json(json{{"recyclers", json::array()}}),
                       doctest::Contains("config: recyclers: must be non-empty"),
                       UsageError);
  CHECK_THROWS_WITH_AS(config_from_json(json{{"model", {{"vocab", 4}}}}),
                       doctest::Contains("model.vocab"), UsageError);
  CHECK_THROWS_WITH_AS(
      config_from_json(json{{"twin", {{"mode", "exact"}, {"eta", 0.5}}}}),
      doctest::Contains("twin.eta"), UsageError);
  CHECK_THROWS_WITH_AS(config_from_json(json{{"task", {{"band", {0.5}}}}}),
                       doctest::Contains("task.band"), UsageError);
  CHECK_THROWS_WITH_AS(config_from_json(json{{"tune", {{"learning_rate", 0.0}}}}),
                       doctest::Contains("tune.learning_rate"), UsageError);
  CHECK_THROWS_WITH_AS(config_from_json(json{{"baseline", {{"draws", 1}}}}),
                       doctest::Contains("baseline.draws"), UsageError);
  CHECK_THROWS_WITH_AS(config_from_json(json{{"sigma_grid", {4.0, 0.0}}}),
                       doctest::Contains("sigma_grid"), UsageError);
  CHECK_THROWS_WITH_AS(
      config_from_json(json{{"seed_overrides", {{"task", "not-a-number"}}}}),
      doctest::Contains("seed_overrides.task"), UsageError);
  CHECK_THROWS_WITH_AS(config_from_json(json{{"init_strategies", {"wayward"}}}),
                       doctest::Contains("tune.wayward_anchor"), UsageError);
  json class_short = json{{"init_strategies", {"class"}},
                          {"task", {{"classes", 3}}},
                          {"tune", {{"prompt_length", 2}}}};
  CHECK_THROWS_WITH_AS(config_from_json(class_short),
                       doctest::Contains("tune.prompt_length"), UsageError);
  CHECK_THROWS_WITH_AS(config_from_json(json{{"schema_version", 99}}),
                       doctest::Contains("schema_version"), UsageError);
}

TEST_CASE("config: unparseable or missing file is a UsageError") {
  const fs::path bad = test_dir() / "bad.json";
  {
    std::ofstream out(bad);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_config(bad), UsageError);
  CHECK_THROWS_AS(load_config(test_dir() / "missing.json"), UsageError);
}

TEST_CASE("seed_for: label-keyed derivation with per-label overrides") {
  ExperimentConfig cfg;
  cfg.master_seed = 7;
  CHECK(seed_for(cfg, "task") == rng::derive(7, "task", 0));
  CHECK(seed_for(cfg, "tune-random", 2) == rng::derive(7, "tune-random", 2));
  CHECK(seed_for(cfg, "task") != seed_for(cfg, "model"));
  cfg.seed_overrides["task"] = 99;
  CHECK(seed_for(cfg, "task") == rng::derive(99, "task", 0));
  CHECK(seed_for(cfg, "model") == rng::derive(7, "model", 0));  // others untouched
}

TEST_CASE("format_double: shortest round-trip decimal form") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.25) == "0.25");
  CHECK(format_double(-3.5) == "-3.5");
  CHECK(format_double(0.0) == "0");
}

TEST_CASE("store: model, prompt, task, mlp, and recycler round-trips") {
  const fs::path dir = test_dir() / "store";
  fs::create_directories(dir);

  const toy::ToyModel m = toy::make_model(48, 6, toy::Nonlinearity::tanh_g, 81);
  store::save_model(dir / "model", m);
  const toy::ToyModel m2 = store::load_model(dir / "model");
  CHECK(m2.id == m.id);
  CHECK(m2.g == m.g);
  CHECK((m2.table.embeddings.array() == m.table.embeddings.array()).all());
  CHECK((m2.w.array() == m.w.array()).all());

  Prompt p;
  p.rows = random_matrix(3, 6, rng::derive(81, "store-p"));
  p.model_id = m.id;
  p.init_strategy = "random";
  p.train_step = 17;
  p.task_tag = "task-x";
  store::save_prompt(dir / "prompt", p);
  const Prompt p2 = store::load_prompt(dir / "prompt");
  CHECK((p2.rows.array() == p.rows.array()).all());
  CHECK(p2.model_id == p.model_id);
  CHECK(p2.init_strategy == p.init_strategy);
  CHECK(p2.train_step == p.train_step);
  CHECK(p2.task_tag == p.task_tag);

  toy::TaskGenConfig tcfg;
  tcfg.seed = 81;
  const toy::SyntheticTask task = toy::make_task(m, tcfg);
  store::save_task(dir / "task.json", task);
  const toy::SyntheticTask t2 = store::load_task(dir / "task.json");
  CHECK(t2.id == task.id);
  CHECK(t2.classes == task.classes);
  CHECK(t2.verbalizers == task.verbalizers);
  REQUIRE(t2.train.size() == task.train.size());
  REQUIRE(t2.eval.size() == task.eval.size());
  for (std::size_t i = 0; i < task.train.size(); ++i) {
    CHECK(t2.train[i].tokens == task.train[i].tokens);
    CHECK(t2.train[i].label == task.train[i].label);
  }

  const nn::MlpNet net = nn::make_mlp(6, 4, 81);
  store::save_mlp(dir / "net", net);
  const nn::MlpNet net2 = store::load_mlp(dir / "net");
  CHECK((net2.w1.array() == net.w1.array()).all());
  CHECK((net2.b1.array() == net.b1.array()).all());
  CHECK((net2.w2.array() == net.w2.array()).all());
  CHECK((net2.b2.array() == net.b2.array()).all());

  const Matrix vs = random_matrix(20, 6, rng::derive(81, "store-vs"));
  const Matrix vt = random_matrix(20, 4, rng::derive(81, "store-vt"));
  nn::MlpTrainConfig ncfg;
  ncfg.epochs = 1;
  ncfg.seed = 81;
  const recycle::FittedRecycler fits[] = {
      recycle::fit_v2v_lin(vs, vt, true),
      recycle::fit_v2v_nn(vs, vt, ncfg),
      recycle::fit_lin_comb(vs, vt),
  };
  int idx = 0;
  for (const auto& r : fits) {
    const fs::path prefix = dir / ("rec" + std::to_string(idx++));
    store::save_recycler(prefix, r);
    const recycle::FittedRecycler r2 = store::load_recycler(prefix);
    CHECK(r2.kind == r.kind);
    CHECK(r2.source_dim == r.source_dim);
    CHECK(r2.target_dim == r.target_dim);
    CHECK(r2.affine == r.affine);
    switch (r.kind) {
      case recycle::Kind::v2v_lin:
        CHECK((r2.y.array() == r.y.array()).all());
        break;
      case recycle::Kind::v2v_nn:
        CHECK((r2.net.w1.array() == r.net.w1.array()).all());
        CHECK((r2.net.b2.array() == r.net.b2.array()).all());
        break;
      case recycle::Kind::lin_comb:
        CHECK((r2.vs_pinv.array() == r.vs_pinv.array()).all());
        CHECK((r2.vt_rows.array() == r.vt_rows.array()).all());
        break;
    }
    // Applying the reloaded recycler is bit-identical to the original.
    Prompt q;
    q.rows = random_matrix(2, 6, rng::derive(81, "store-q"));
    const Prompt a = recycle::apply_recycler(r, q, true);
    const Prompt b = recycle::apply_recycler(r2, q, true);
    CHECK((a.rows.array() == b.rows.array()).all());
  }
}

TEST_CASE("run_experiment: artifacts, exact-twin invariance, reports, rebuild, seed isolation") {
  const fs::path out = test_dir() / "run";
  const ExperimentConfig cfg = config_from_json(small_config());
  const RunArtifacts run = run_experiment(cfg, out);

  SUBCASE("run layout and trial bookkeeping") {
    CHECK(fs::exists(out / "models" / "source.json"));
    CHECK(fs::exists(out / "models" / "target.json"));
    CHECK(fs::exists(out / "models" / "twin_g.prcy"));
    CHECK(fs::exists(out / "task.json"));
    CHECK(fs::exists(out / "trials.json"));
    CHECK(fs::exists(out / "results.json"));
    CHECK(fs::exists(out / "results.csv"));
    CHECK(fs::exists(out / "reliability.csv"));
    // 2 recyclers x 2 strategies x 2 seeds x 4 default checkpoints.
    CHECK(run.trials.size() == 32);
    CHECK(run.source_id == "source");
    CHECK(run.baseline.accuracy.n == 4);
    CHECK(run.baseline_accuracies.size() == 4);
    // Checkpoints ladder for steps=20.
    std::set<std::uint64_t> steps;
    for (const auto& tr : run.trials) steps.insert(tr.checkpoint);
    CHECK(steps == std::set<std::uint64_t>{2, 5, 10, 20});
    // Tuned and recycled prompts persisted for every trial cell.
    CHECK(fs::exists(out / "prompts" / "src-random-k0-s20.json"));
    CHECK(fs::exists(out / "prompts" / "tgt-class-k1-s10.json"));
    CHECK(fs::exists(out / "recyclers" / "v2v-lin.json"));
    CHECK(fs::exists(out / "recyclers" / "lin-comb.json"));
    CHECK(fs::exists(out / "recycled" / "v2v-lin-random-k0-s20.json"));
  }

  SUBCASE("exact twin: v2v-lin recycling preserves accuracy trial-for-trial") {
    for (const auto& tr : run.trials) {
      if (tr.recycler != "v2v-lin") continue;
      CHECK(tr.recycled_acc == tr.source_acc);
    }
    CHECK(run.zero_shot_source == run.zero_shot_target);
  }

  SUBCASE("result table aggregates per (recycler, init, checkpoint)") {
    const ResultTable table = build_table(run);
    CHECK(table.rows.size() == 16);  // 2 recyclers x 2 inits x 4 checkpoints
    for (const auto& row : table.rows) {
      CHECK(row.n == 2);
      CHECK(row.source_model == "source");
      CHECK(row.target_model == run.target_id);
      CHECK(row.zero_shot == run.zero_shot_target);
      CHECK(row.random_mean == run.baseline.accuracy.mean);
      CHECK(row.acc_mean >= 0.0);
      CHECK(row.acc_mean <= 1.0);
      if (row.welch_defined) {
        CHECK(row.welch_p >= 0.0);
        CHECK(row.welch_p <= 1.0);
        CHECK(row.significant == (row.welch_p < 0.05));
      } else {
        CHECK_FALSE(row.significant);
      }
    }
    // Row order: recyclers in config order, inits in config order, steps ascending.
    CHECK(table.rows[0].recycler == "v2v-lin");
    CHECK(table.rows[0].init == "random");
    CHECK(table.rows[0].checkpoint == 2);
    CHECK(table.rows[3].checkpoint == 20);
    CHECK(table.rows[4].init == "class");
    CHECK(table.rows[8].recycler == "lin-comb");

    const std::vector<ReliabilityRow> rel = build_reliability(run);
    CHECK(rel.size() == 8);  // 2 recyclers x 4 checkpoints, pooled over inits/seeds
    for (const auto& row : rel) {
      CHECK(row.n == 4);  // 2 inits x 2 seeds
      CHECK(row.frac_gt_zs >= 0.0);
      CHECK(row.frac_gt_zs <= 1.0);
    }
  }

  SUBCASE("results.csv carries the documented header") {
    const std::string csv = read_text(out / "results.csv");
    CHECK(csv.rfind("source_model,target_model,recycler,init,checkpoint,n,"
                    "acc_mean,acc_sd,source_mean,source_sd,retune_mean,retune_sd,"
                    "zero_shot,random_mean,random_sd,frac_gt_zs,frac_gt_random,"
                    "welch_t,welch_df,welch_p,significant",
                    0) == 0);
    // Header plus one line per table row.
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);
  }

  SUBCASE("trials.json round-trips through load_artifacts_json") {
    const RunArtifacts loaded = load_artifacts_json(out / "trials.json");
    CHECK(loaded.source_id == run.source_id);
    CHECK(loaded.target_id == run.target_id);
    CHECK(loaded.task_id == run.task_id);
    CHECK(loaded.zero_shot_source == run.zero_shot_source);
    CHECK(loaded.zero_shot_target == run.zero_shot_target);
    CHECK(loaded.baseline.accuracy.mean == run.baseline.accuracy.mean);
    CHECK(loaded.baseline.accuracy.sd == run.baseline.accuracy.sd);
    CHECK(loaded.baseline_accuracies == run.baseline_accuracies);
    REQUIRE(loaded.trials.size() == run.trials.size());
    for (std::size_t i = 0; i < run.trials.size(); ++i) {
      CHECK(loaded.trials[i].recycler == run.trials[i].recycler);
      CHECK(loaded.trials[i].init == run.trials[i].init);
      CHECK(loaded.trials[i].trial == run.trials[i].trial);
      CHECK(loaded.trials[i].checkpoint == run.trials[i].checkpoint);
      CHECK(loaded.trials[i].source_acc == run.trials[i].source_acc);
      CHECK(loaded.trials[i].recycled_acc == run.trials[i].recycled_acc);
      CHECK(loaded.trials[i].retuned_acc == run.trials[i].retuned_acc);
    }
  }

  SUBCASE("report_from_artifacts rebuilds the three report files byte-identically") {
    const std::string results_json = read_text(out / "results.json");
    const std::string results_csv = read_text(out / "results.csv");
    const std::string reliability_csv = read_text(out / "reliability.csv");
    report_from_artifacts(out);
    CHECK(read_text(out / "results.json") == results_json);
    CHECK(read_text(out / "results.csv") == results_csv);
    CHECK(read_text(out / "reliability.csv") == reliability_csv);
  }

  SUBCASE("seed isolation: overriding the baseline seed leaves prompts and recyclers intact") {
    json cfg2_json = small_config();
    cfg2_json["seed_overrides"] = {{"baseline", 31337}};
    const ExperimentConfig cfg2 = config_from_json(cfg2_json);
    const fs::path out2 = test_dir() / "run_isolated";
    const RunArtifacts run2 = run_experiment(cfg2, out2);
    CHECK(run2.baseline_accuracies != run.baseline_accuracies);
    for (const char* sub : {"prompts", "recyclers", "recycled"}) {
      std::set<std::string> names;
      for (const auto& entry : fs::directory_iterator(out / sub))
        names.insert(entry.path().filename().string());
      std::set<std::string> names2;
      for (const auto& entry : fs::directory_iterator(out2 / sub))
        names2.insert(entry.path().filename().string());
      CHECK(names == names2);
      CHECK_FALSE(names.empty());
      for (const auto& name : names)
        CHECK(read_text(out / sub / name) == read_text(out2 / sub / name));
    }
    // Trial accuracies are untouched by the baseline seed.
    REQUIRE(run2.trials.size() == run.trials.size());
    for (std::size_t i = 0; i < run.trials.size(); ++i) {
      CHECK(run2.trials[i].recycled_acc == run.trials[i].recycled_acc);
      CHECK(run2.trials[i].source_acc == run.trials[i].source_acc);
    }
  }

  SUBCASE("thread-count invariance of the full artifact set") {
    const fs::path out4 = test_dir() / "run_threads";
    const RunArtifacts run4 = run_experiment(cfg, out4, /*threads=*/4);
    CHECK(run4.baseline_accuracies == run.baseline_accuracies);
    CHECK(read_text(out4 / "results.csv") == read_text(out / "results.csv"));
    CHECK(read_text(out4 / "trials.json") == read_text(out / "trials.json"));
  }
}
