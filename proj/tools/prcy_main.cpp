// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0
//
// prcy: config-driven prompt-recycling toolkit.  Subcommands wrap one module
// operation each and print a one-line machine-parsable summary on success.
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric error.

#include <cstdint>
#include <fstream>
#include <memory>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "prcy/experiment.hpp"
#include "prcy/matio.hpp"
#include "prcy/recycle.hpp"
#include "prcy/stats.hpp"
#include "prcy/store.hpp"
#include "prcy/toymodel.hpp"
#include "prcy/types.hpp"

namespace fs = std::filesystem;
using prcy::experiment::format_double;

namespace {

void ensure_parent(const fs::path& p) {
  const fs::path dir = p.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
}

void add_gen_model(CLI::App& app) {
  auto* cmd = app.add_subcommand("gen-model", "generate a frozen toy model");
  struct Opts {
    std::string out, id, nonlinearity = "tanh";
    prcy::Index vocab = 512, dim = 24;
    std::uint64_t seed = 0;
  };
  auto opts = std::make_shared<Opts>();
  cmd->add_option("--out", opts->out, "output artifact prefix")->required();
  cmd->add_option("--vocab", opts->vocab, "vocabulary size (>= 8)");
  cmd->add_option("--dim", opts->dim, "embedding dimension (>= 2)");
  cmd->add_option("--nonlinearity", opts->nonlinearity, "tanh or linear");
  cmd->add_option("--seed", opts->seed, "master seed");
  cmd->add_option("--id", opts->id, "model id (default toy-<seed>)");
  cmd->callback([opts] {
    const auto m = prcy::toy::make_model(opts->vocab, opts->dim,
                                         prcy::toy::parse_nonlinearity(opts->nonlinearity),
                                         opts->seed, opts->id);
    ensure_parent(opts->out);
    prcy::store::save_model(opts->out, m);
    std::cout << "gen-model ok id=" << m.id << " vocab=" << m.vocab_size()
              << " dim=" << m.dim() << " nonlinearity=" << to_string(m.g)
              << " out=" << opts->out << '\n';
  });
}

void add_gen_twin(CLI::App& app) {
  auto* cmd = app.add_subcommand("gen-twin", "derive a twin target model");
  struct Opts {
    std::string model, out, mode = "exact";
    double eta = 0.0;
    std::uint64_t seed = 0;
  };
  auto opts = std::make_shared<Opts>();
  cmd->add_option("--model", opts->model, "source model prefix")->required();
  cmd->add_option("--out", opts->out, "output artifact prefix")->required();
  cmd->add_option("--mode", opts->mode, "exact or rotated");
  cmd->add_option("--eta", opts->eta, "noise scale (rotated mode only)");
  cmd->add_option("--seed", opts->seed, "twin seed");
  cmd->callback([opts] {
    const auto src = prcy::store::load_model(opts->model);
    prcy::toy::TwinSpec spec;
    spec.mode = prcy::toy::parse_twin_mode(opts->mode);
    spec.eta = opts->eta;
    spec.seed = opts->seed;
    const auto tw = prcy::toy::make_twin(src, spec);
    ensure_parent(opts->out);
    prcy::store::save_model(opts->out, tw.twin);
    fs::path gpath = opts->out;
    gpath += ".g.prcy";
    prcy::matio::save_matrix(gpath, tw.g);
    std::cout << "gen-twin ok id=" << tw.twin.id << " mode=" << opts->mode
              << " eta=" << format_double(opts->eta) << " out=" << opts->out
              << " g=" << gpath.string() << '\n';
  });
}

void add_gen_task(CLI::App& app) {
  auto* cmd = app.add_subcommand("gen-task", "generate a synthetic classification task");
  struct Opts {
    std::string model, out;
    prcy::toy::TaskGenConfig cfg;
  };
  auto opts = std::make_shared<Opts>();
  cmd->add_option("--model", opts->model, "model prefix the task is built against")->required();
  cmd->add_option("--out", opts->out, "output task JSON path")->required();
  cmd->add_option("--classes", opts->cfg.classes, "number of classes");
  cmd->add_option("--train", opts->cfg.train_examples, "train split size");
  cmd->add_option("--eval", opts->cfg.eval_examples, "eval split size");
  cmd->add_option("--tokens", opts->cfg.tokens_per_example, "tokens per example");
  cmd->add_option("--separation", opts->cfg.separation, "signal-pool margin quantile (0,1]");
  cmd->add_option("--distractor-rate", opts->cfg.distractor_rate, "random-token rate [0,1)");
  cmd->add_option("--band-lo", opts->cfg.band_lo, "zero-shot band lower edge");
  cmd->add_option("--band-hi", opts->cfg.band_hi, "zero-shot band upper edge");
  cmd->add_option("--retry-cap", opts->cfg.retry_cap, "candidate retries before failing");
  cmd->add_option("--seed", opts->cfg.seed, "task seed");
  cmd->callback([opts] {
    const auto m = prcy::store::load_model(opts->model);
    const auto task = prcy::toy::make_task(m, opts->cfg);
    ensure_parent(opts->out);
    prcy::store::save_task(opts->out, task);
    std::cout << "gen-task ok id=" << task.id << " classes=" << task.classes
              << " train=" << task.train.size() << " eval=" << task.eval.size()
              << " zero_shot=" << format_double(prcy::toy::zero_shot_eval(m, task))
              << " out=" << opts->out << '\n';
  });
}

void add_tune(CLI::App& app) {
  auto* cmd = app.add_subcommand("tune", "prompt-tune against a frozen model");
  struct Opts {
    std::string model, task, out, init = "random";
    prcy::toy::PromptTuneConfig cfg;
  };
  auto opts = std::make_shared<Opts>();
  cmd->add_option("--model", opts->model, "model prefix")->required();
  cmd->add_option("--task", opts->task, "task JSON path")->required();
  cmd->add_option("--out", opts->out, "output prompt prefix (checkpoints at <out>-s<step>)")
      ->required();
  cmd->add_option("--init", opts->init, "random | class | spot-analogue | wayward");
  cmd->add_option("--length", opts->cfg.prompt_length, "prompt rows");
  cmd->add_option("--steps", opts->cfg.steps, "optimizer steps");
  cmd->add_option("--batch", opts->cfg.batch_size, "mini-batch size");
  cmd->add_option("--lr", opts->cfg.learning_rate, "Adam learning rate");
  cmd->add_option("--checkpoints", opts->cfg.checkpoint_steps,
                  "checkpoint steps (default 2,5,10,20 x steps/20)")
      ->delimiter(',');
  cmd->add_option("--wayward-anchor", opts->cfg.wayward_anchor, "anchor token ids")
      ->delimiter(',');
  cmd->add_option("--wayward-gamma", opts->cfg.wayward_gamma, "anchor regularizer weight");
  cmd->add_flag("--allow-anchor-truncation", opts->cfg.allow_anchor_truncation,
                "permit anchors longer than the prompt");
  cmd->add_option("--spot-pretune-steps", opts->cfg.spot_pretune_steps,
                  "pre-tune steps for spot-analogue");
  cmd->add_option("--seed", opts->cfg.seed, "tuning seed");
  cmd->callback([opts] {
    const auto m = prcy::store::load_model(opts->model);
    const auto task = prcy::store::load_task(opts->task);
    opts->cfg.init = prcy::toy::parse_init_strategy(opts->init);
    const auto result = prcy::toy::prompt_tune(m, task, opts->cfg);
    ensure_parent(opts->out);
    for (const auto& cp : result.checkpoints) {
      prcy::store::save_prompt(opts->out + "-s" + std::to_string(cp.train_step), cp);
    }
    prcy::store::save_prompt(opts->out, result.final);
    const double acc =
        prcy::toy::eval_accuracy(m, result.final, task, prcy::toy::Split::eval);
    std::cout << "tune ok model=" << m.id << " init=" << opts->init
              << " steps=" << opts->cfg.steps << " checkpoints=" << result.checkpoints.size()
              << " final_loss=" << format_double(result.step_losses.back())
              << " eval_acc=" << format_double(acc) << " out=" << opts->out << '\n';
  });
}

void add_recycle(CLI::App& app) {
  auto* cmd = app.add_subcommand("recycle", "map a prompt into a target model's space");
  struct Opts {
    std::string recycler, source_model, target_model, prompt, out, kind = "v2v-lin";
    std::string allowlist, save_recycler;
    std::size_t skip = 1000, take = 4000;
    bool affine = false, allow_mismatch = false;
    prcy::nn::MlpTrainConfig nn_cfg;
    std::uint64_t seed = 0;
  };
  auto opts = std::make_shared<Opts>();
  cmd->add_option("--prompt", opts->prompt, "prompt prefix to recycle")->required();
  cmd->add_option("--out", opts->out, "output prompt prefix")->required();
  cmd->add_option("--recycler", opts->recycler, "load a fitted recycler prefix");
  cmd->add_option("--source-model", opts->source_model, "fit: source model prefix");
  cmd->add_option("--target-model", opts->target_model, "fit: target model prefix");
  cmd->add_option("--kind", opts->kind, "fit: v2v-lin | v2v-nn | lin-comb");
  cmd->add_option("--skip", opts->skip, "fit: skip the most frequent rows");
  cmd->add_option("--take", opts->take, "fit: training rows after the skip");
  cmd->add_option("--allowlist", opts->allowlist, "fit: token allowlist file");
  cmd->add_flag("--affine", opts->affine, "fit: v2v-lin with a bias row");
  cmd->add_option("--nn-epochs", opts->nn_cfg.epochs, "fit: v2v-nn epochs");
  cmd->add_option("--nn-batch", opts->nn_cfg.batch_size, "fit: v2v-nn batch size");
  cmd->add_option("--nn-lr", opts->nn_cfg.learning_rate, "fit: v2v-nn learning rate");
  cmd->add_option("--seed", opts->seed, "fit: v2v-nn training seed");
  cmd->add_option("--save-recycler", opts->save_recycler, "fit: also save the recycler");
  cmd->add_flag("--allow-model-mismatch", opts->allow_mismatch,
                "apply even if the prompt's model id differs from the recycler's source");
  cmd->callback([opts] {
    const bool load_mode = !opts->recycler.empty();
    const bool fit_mode = !opts->source_model.empty() || !opts->target_model.empty();
    if (load_mode == fit_mode) {
      throw prcy::UsageError(
          "recycle: pass either --recycler or --source-model/--target-model");
    }
    prcy::recycle::FittedRecycler r;
    if (load_mode) {
      r = prcy::store::load_recycler(opts->recycler);
    } else {
      if (opts->source_model.empty() || opts->target_model.empty()) {
        throw prcy::UsageError("recycle: fitting needs both --source-model and --target-model");
      }
      const auto src = prcy::store::load_model(opts->source_model);
      const auto tgt = prcy::store::load_model(opts->target_model);
      prcy::vocab::VocabSubsetSpec spec;
      spec.skip = opts->skip;
      spec.take = opts->take;
      if (!opts->allowlist.empty()) {
        spec.allowlist = prcy::matio::load_allowlist(opts->allowlist);
      }
      const auto [v_s, v_t] =
          prcy::vocab::paired_training_matrices(src.table, tgt.table, spec);
      switch (prcy::recycle::parse_kind(opts->kind)) {
        case prcy::recycle::Kind::v2v_lin:
          r = prcy::recycle::fit_v2v_lin(v_s, v_t, opts->affine);
          break;
        case prcy::recycle::Kind::v2v_nn: {
          opts->nn_cfg.seed = opts->seed;
          r = prcy::recycle::fit_v2v_nn(v_s, v_t, opts->nn_cfg);
          break;
        }
        case prcy::recycle::Kind::lin_comb:
          r = prcy::recycle::fit_lin_comb(v_s, v_t);
          break;
      }
      r.source_id = src.id;
      r.target_id = tgt.id;
      if (!opts->save_recycler.empty()) {
        ensure_parent(opts->save_recycler);
        prcy::store::save_recycler(opts->save_recycler, r);
      }
    }
    const auto p = prcy::store::load_prompt(opts->prompt);
    const auto out = prcy::recycle::apply_recycler(r, p, opts->allow_mismatch);
    ensure_parent(opts->out);
    prcy::store::save_prompt(opts->out, out);
    std::cout << "recycle ok kind=" << to_string(r.kind) << " source=" << r.source_id
              << " target=" << r.target_id << " rows=" << out.length()
              << " dim=" << out.dim() << " out=" << opts->out << '\n';
  });
}

void add_eval(CLI::App& app) {
  auto* cmd = app.add_subcommand("eval", "evaluate a prompt (or zero-shot) on a task");
  struct Opts {
    std::string model, task, prompt, split = "eval";
    bool zero_shot = false;
  };
  auto opts = std::make_shared<Opts>();
  cmd->add_option("--model", opts->model, "model prefix")->required();
  cmd->add_option("--task", opts->task, "task JSON path")->required();
  cmd->add_option("--prompt", opts->prompt, "prompt prefix");
  cmd->add_flag("--zero-shot", opts->zero_shot, "evaluate the empty prompt");
  cmd->add_option("--split", opts->split, "train or eval (default eval)");
  cmd->callback([opts] {
    if (opts->zero_shot == !opts->prompt.empty()) {
      throw prcy::UsageError("eval: pass exactly one of --prompt or --zero-shot");
    }
    const auto m = prcy::store::load_model(opts->model);
    const auto task = prcy::store::load_task(opts->task);
    prcy::toy::Split split;
    if (opts->split == "train") {
      split = prcy::toy::Split::train;
    } else if (opts->split == "eval") {
      split = prcy::toy::Split::eval;
    } else {
      throw prcy::UsageError("eval: unknown split '" + opts->split + "'");
    }
    const prcy::Prompt p = opts->zero_shot
                               ? prcy::zero_shot_prompt(m.dim(), m.id, task.id)
                               : prcy::store::load_prompt(opts->prompt);
    const double acc = prcy::toy::eval_accuracy(m, p, task, split);
    std::cout << "eval ok model=" << m.id
              << " prompt=" << (opts->zero_shot ? std::string("zero-shot") : opts->prompt)
              << " split=" << opts->split << " accuracy=" << format_double(acc) << '\n';
  });
}

void add_baseline(CLI::App& app) {
  auto* cmd = app.add_subcommand("baseline", "random-prompt baseline (optionally a sigma grid)");
  struct Opts {
    std::string model, task, out;
    prcy::stats::RandomPromptConfig cfg;
    std::vector<double> grid;
    int threads = 1;
  };
  auto opts = std::make_shared<Opts>();
  cmd->add_option("--model", opts->model, "model prefix")->required();
  cmd->add_option("--task", opts->task, "task JSON path")->required();
  cmd->add_option("--sigma", opts->cfg.sigma, "Gaussian entry scale");
  cmd->add_option("--draws", opts->cfg.draws, "number of random prompts");
  cmd->add_option("--length", opts->cfg.prompt_length, "prompt rows");
  cmd->add_option("--seed", opts->cfg.seed, "baseline seed");
  cmd->add_option("--threads", opts->threads, "parallel draw evaluation");
  cmd->add_option("--grid", opts->grid, "sigma grid to search instead of a single sigma")
      ->delimiter(',');
  cmd->add_option("--out", opts->out, "optional JSON output path");
  cmd->callback([opts] {
    const auto m = prcy::store::load_model(opts->model);
    const auto task = prcy::store::load_task(opts->task);
    nlohmann::json j{{"kind", "baseline"}, {"model", m.id}, {"task", task.id}};
    if (opts->grid.empty()) {
      const auto b = prcy::stats::random_baseline(m, task, opts->cfg, opts->threads);
      j["sigma"] = b.sigma;
      j["draws"] = b.accuracy.n;
      j["mean"] = b.accuracy.mean;
      j["sd"] = b.accuracy.sd;
      std::cout << "baseline ok sigma=" << format_double(b.sigma)
                << " draws=" << b.accuracy.n << " mean=" << format_double(b.accuracy.mean)
                << " sd=" << format_double(b.accuracy.sd) << '\n';
    } else {
      const auto g =
          prcy::stats::sigma_grid_search(m, task, opts->cfg, opts->grid, opts->threads);
      nlohmann::json per = nlohmann::json::array();
      for (const auto& b : g.per_sigma) {
        per.push_back(nlohmann::json{{"sigma", b.sigma},
                                     {"draws", b.accuracy.n},
                                     {"mean", b.accuracy.mean},
                                     {"sd", b.accuracy.sd}});
      }
      j["grid"] = std::move(per);
      j["best_sigma"] = g.best_sigma;
      j["best_mean"] = g.best.mean;
      std::cout << "baseline ok grid=" << g.per_sigma.size()
                << " best_sigma=" << format_double(g.best_sigma)
                << " best_mean=" << format_double(g.best.mean) << '\n';
    }
    if (!opts->out.empty()) {
      ensure_parent(opts->out);
      std::ofstream out(opts->out, std::ios::trunc);
      if (!out) throw prcy::DataError("cannot open " + opts->out + " for writing");
      out << j.dump(2) << '\n';
    }
  });
}

void add_report(CLI::App& app) {
  auto* cmd = app.add_subcommand("report", "rebuild result tables from stored trials");
  struct Opts {
    std::string out;
  };
  auto opts = std::make_shared<Opts>();
  cmd->add_option("--out", opts->out, "experiment output directory (holds trials.json)")
      ->required();
  cmd->callback([opts] {
    const auto table = prcy::experiment::report_from_artifacts(opts->out);
    std::cout << "report ok rows=" << table.rows.size() << " out=" << opts->out << '\n';
  });
}

void add_run(CLI::App& app) {
  auto* cmd = app.add_subcommand("run", "run a full experiment from a JSON config");
  struct Opts {
    std::string config, out = "out";
    int threads = 1;
    bool verbose = false;
  };
  auto opts = std::make_shared<Opts>();
  cmd->add_option("--config", opts->config, "experiment config JSON")->required();
  cmd->add_option("--out", opts->out, "output directory (default ./out)");
  cmd->add_option("--threads", opts->threads, "parallel baseline evaluation");
  cmd->add_flag("--verbose", opts->verbose, "progress to stderr");
  cmd->callback([opts] {
    const auto cfg = prcy::experiment::load_config(opts->config);
    const auto run =
        prcy::experiment::run_experiment(cfg, opts->out, opts->threads, opts->verbose);
    const auto table = prcy::experiment::build_table(run);
    std::cout << "run ok trials=" << run.trials.size() << " rows=" << table.rows.size()
              << " zero_shot_target=" << format_double(run.zero_shot_target)
              << " baseline_mean=" << format_double(run.baseline.accuracy.mean)
              << " out=" << opts->out << '\n';
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prcy: prompt recycling toolkit for desk-scale frozen models"};
  app.require_subcommand(1);

  add_gen_model(app);
  add_gen_twin(app);
  add_gen_task(app);
  add_tune(app);
  add_recycle(app);
  add_eval(app);
  add_baseline(app);
  add_report(app);
  add_run(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage
  } catch (const prcy::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const prcy::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const prcy::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
