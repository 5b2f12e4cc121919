// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#include "prcy/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>

#include "prcy/linalg.hpp"
#include "prcy/rng.hpp"

namespace prcy::toy {

std::string to_string(Nonlinearity g) {
  return g == Nonlinearity::tanh_g ? "tanh" : "linear";
}

Nonlinearity parse_nonlinearity(std::string_view name) {
  if (name == "tanh") return Nonlinearity::tanh_g;
  if (name == "linear") return Nonlinearity::linear_g;
  throw UsageError("unknown nonlinearity '" + std::string(name) +
                   "' (expected tanh or linear)");
}

std::string to_string(TwinSpec::Mode mode) {
  return mode == TwinSpec::Mode::exact ? "exact" : "rotated";
}

TwinSpec::Mode parse_twin_mode(std::string_view name) {
  if (name == "exact") return TwinSpec::Mode::exact;
  if (name == "rotated") return TwinSpec::Mode::rotated;
  throw UsageError("unknown twin mode '" + std::string(name) +
                   "' (expected exact or rotated)");
}

std::string to_string(InitStrategy s) {
  switch (s) {
    case InitStrategy::random: return "random";
    case InitStrategy::class_based: return "class";
    case InitStrategy::spot_analogue: return "spot-analogue";
    case InitStrategy::wayward: return "wayward";
  }
  throw UsageError("to_string: bad init strategy");
}

InitStrategy parse_init_strategy(std::string_view name) {
  if (name == "random") return InitStrategy::random;
  if (name == "class") return InitStrategy::class_based;
  if (name == "spot-analogue") return InitStrategy::spot_analogue;
  if (name == "wayward") return InitStrategy::wayward;
  throw UsageError("unknown init strategy '" + std::string(name) +
                   "' (expected random, class, spot-analogue, or wayward)");
}

ToyModel make_model(Index vocab, Index dim, Nonlinearity g, std::uint64_t seed,
                    std::string id) {
  if (vocab < 8) throw UsageError("make_model: vocab must be >= 8");
  if (dim < 2) throw UsageError("make_model: dim must be >= 2");

  ToyModel m;
  m.id = id.empty() ? "toy-" + std::to_string(seed) : std::move(id);
  m.g = g;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));

  rng::Counter ct(rng::derive(seed, "model-table"));
  m.table.model_id = m.id;
  m.table.embeddings.resize(vocab, dim);
  for (Index i = 0; i < vocab; ++i)
    for (Index j = 0; j < dim; ++j)
      m.table.embeddings(i, j) =
          scale * ct.gaussian(static_cast<std::uint64_t>(i * dim + j));

  rng::Counter cw(rng::derive(seed, "model-w"));
  m.w.resize(dim, dim);
  for (Index i = 0; i < dim; ++i)
    for (Index j = 0; j < dim; ++j)
      m.w(i, j) = scale * cw.gaussian(static_cast<std::uint64_t>(i * dim + j));
  return m;
}

TwinResult make_twin(const ToyModel& m, const TwinSpec& spec) {
  if (spec.eta < 0.0) throw UsageError("make_twin: eta must be >= 0");
  const Index e = m.dim();
  const Index n = m.vocab_size();

  TwinResult out;
  out.twin.id = m.id + "-twin";
  out.twin.g = m.g;

  if (spec.mode == TwinSpec::Mode::exact) {
    if (spec.eta != 0.0) throw UsageError("make_twin: exact mode requires eta == 0");
    out.g = linalg::random_signed_permutation(e, rng::derive(spec.seed, "twin-g"));
    // Apply the signed permutation by explicit index gathering so the twin's
    // parameters are bitwise re-arrangements of the source's, not sums.
    std::vector<Index> perm(static_cast<std::size_t>(e));
    std::vector<double> sign(static_cast<std::size_t>(e));
    for (Index i = 0; i < e; ++i) {
      for (Index j = 0; j < e; ++j) {
        if (out.g(i, j) != 0.0) {
          perm[static_cast<std::size_t>(i)] = j;
          sign[static_cast<std::size_t>(i)] = out.g(i, j);
          break;
        }
      }
    }
    out.twin.table.embeddings.resize(n, e);
    for (Index i = 0; i < e; ++i) {
      out.twin.table.embeddings.col(perm[static_cast<std::size_t>(i)]) =
          sign[static_cast<std::size_t>(i)] * m.table.embeddings.col(i);
    }
    out.twin.w.resize(e, e);
    for (Index i = 0; i < e; ++i)
      for (Index j = 0; j < e; ++j)
        out.twin.w(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]) =
            sign[static_cast<std::size_t>(i)] * sign[static_cast<std::size_t>(j)] * m.w(i, j);
  } else {
    out.g = linalg::random_orthogonal(e, rng::derive(spec.seed, "twin-g"));
    out.twin.table.embeddings = m.table.embeddings * out.g;
    out.twin.w = out.g.transpose() * m.w * out.g;
    if (spec.eta > 0.0) {
      rng::Counter cn(rng::derive(spec.seed, "twin-table-noise"));
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < e; ++j)
          out.twin.table.embeddings(i, j) +=
              spec.eta * cn.gaussian(static_cast<std::uint64_t>(i * e + j));
      rng::Counter cwn(rng::derive(spec.seed, "twin-w-noise"));
      for (Index i = 0; i < e; ++i)
        for (Index j = 0; j < e; ++j)
          out.twin.w(i, j) += spec.eta * cwn.gaussian(static_cast<std::uint64_t>(i * e + j));
    }
  }
  out.twin.table.model_id = out.twin.id;
  return out;
}

namespace {

void check_tokens(const ToyModel& m, std::span<const std::size_t> tokens,
                  const char* what) {
  for (std::size_t t : tokens) {
    if (t >= static_cast<std::size_t>(m.vocab_size())) {
      throw DataError(std::string("model_score: ") + what + " token " +
                      std::to_string(t) + " out of range for vocab of " +
                      std::to_string(m.vocab_size()));
    }
  }
}

// Shared forward pass: h = g(mean(prompt rows + token embeddings) W).
RowVector hidden_activation(const ToyModel& m, const Prompt& p,
                            std::span<const std::size_t> input) {
  const Index e = m.dim();
  if (p.length() > 0 && p.dim() != e) {
    throw DataError("model_score: prompt width " + std::to_string(p.dim()) +
                    " does not match model dim " + std::to_string(e));
  }
  check_tokens(m, input, "input");
  const Index r = p.length() + static_cast<Index>(input.size());
  if (r == 0) throw DataError("model_score: prompt and input are both empty");

  RowVector u = RowVector::Zero(e);
  if (p.length() > 0) u = p.rows.colwise().sum();
  for (std::size_t t : input) u += m.table.embeddings.row(static_cast<Index>(t));
  u /= static_cast<double>(r);

  RowVector z = u * m.w;
  if (m.g == Nonlinearity::tanh_g) return z.array().tanh();
  return z;
}

double verbalizer_score(const ToyModel& m, const RowVector& h,
                        std::span<const std::size_t> verbalizer) {
  if (verbalizer.empty()) throw DataError("model_score: empty verbalizer");
  check_tokens(m, verbalizer, "verbalizer");
  double s = 0.0;
  for (std::size_t v : verbalizer) {
    s += m.table.embeddings.row(static_cast<Index>(v)).dot(h);
  }
  return s / static_cast<double>(verbalizer.size());
}

}  // namespace

double model_score(const ToyModel& m, const Prompt& p,
                   std::span<const std::size_t> input,
                   std::span<const std::size_t> verbalizer) {
  return verbalizer_score(m, hidden_activation(m, p, input), verbalizer);
}

std::vector<double> class_scores(const ToyModel& m, const Prompt& p,
                                 std::span<const std::size_t> input,
                                 const SyntheticTask& task) {
  if (task.verbalizers.size() != static_cast<std::size_t>(task.classes)) {
    throw DataError("task '" + task.id + "' has " + std::to_string(task.verbalizers.size()) +
                    " verbalizers for " + std::to_string(task.classes) + " classes");
  }
  const RowVector h = hidden_activation(m, p, input);
  std::vector<double> scores(task.verbalizers.size());
  for (std::size_t c = 0; c < task.verbalizers.size(); ++c) {
    scores[c] = verbalizer_score(m, h, task.verbalizers[c]);
  }
  return scores;
}

int rank_classify(const ToyModel& m, const Prompt& p,
                  std::span<const std::size_t> input, const SyntheticTask& task) {
  const auto scores = class_scores(m, p, input, task);
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = c;  // ties keep the lowest index
  }
  return static_cast<int>(best);
}

double eval_accuracy(const ToyModel& m, const Prompt& p, const SyntheticTask& task,
                     Split split) {
  const auto& examples = split == Split::train ? task.train : task.eval;
  if (examples.empty()) {
    throw DataError("eval_accuracy: task '" + task.id + "' has an empty split");
  }
  std::size_t correct = 0;
  for (const TaskExample& ex : examples) {
    if (rank_classify(m, p, ex.tokens, task) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

namespace {

// Per-class signal pools.  Class directions come from the model's own scoring
// rule: token t leans toward class c when table[t] . W . table[v_c] is large.
// Each pool keeps the tokens above the `separation` margin quantile among the
// tokens whose argmax class is c.
std::vector<std::vector<std::size_t>> build_pools(const ToyModel& m,
                                                  const std::vector<std::size_t>& verbs,
                                                  double separation) {
  const Index n = m.vocab_size();
  const auto classes = verbs.size();

  Matrix scores(n, static_cast<Index>(classes));  // token x class proxy margins
  for (std::size_t c = 0; c < classes; ++c) {
    Vector d = m.w * m.table.embeddings.row(static_cast<Index>(verbs[c])).transpose();
    scores.col(static_cast<Index>(c)) = m.table.embeddings * d;
  }

  std::vector<std::vector<std::pair<double, std::size_t>>> ranked(classes);
  for (Index t = 0; t < n; ++t) {
    if (std::find(verbs.begin(), verbs.end(), static_cast<std::size_t>(t)) != verbs.end()) {
      continue;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (scores(t, static_cast<Index>(c)) > scores(t, static_cast<Index>(best))) best = c;
    }
    double second = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      if (c != best) second = std::max(second, scores(t, static_cast<Index>(c)));
    }
    ranked[best].emplace_back(scores(t, static_cast<Index>(best)) - second,
                              static_cast<std::size_t>(t));
  }

  std::vector<std::vector<std::size_t>> pools(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    auto& r = ranked[c];
    if (r.empty()) return {};  // caller retries with fresh verbalizers
    std::sort(r.begin(), r.end());  // by (margin, token): fully deterministic
    auto start = static_cast<std::size_t>(separation * static_cast<double>(r.size()));
    start = std::min(start, r.size() - 1);
    for (std::size_t i = start; i < r.size(); ++i) pools[c].push_back(r[i].second);
  }
  return pools;
}

std::optional<SyntheticTask> assemble_task(const ToyModel& m, const TaskGenConfig& cfg,
                                           std::uint64_t cand_key, int tilt_idx,
                                           double tilt,
                                           const std::vector<std::size_t>& verbs,
                                           const std::vector<std::vector<std::size_t>>& pools) {
  SyntheticTask task;
  task.classes = cfg.classes;
  for (std::size_t v : verbs) task.verbalizers.push_back({v});

  const auto n = static_cast<std::uint64_t>(m.vocab_size());
  for (int split = 0; split < 2; ++split) {
    const int count = split == 0 ? cfg.train_examples : cfg.eval_examples;
    const char* label_str = split == 0 ? "train-example" : "eval-example";
    auto& out = split == 0 ? task.train : task.eval;
    std::set<std::vector<std::size_t>> seen;
    for (int i = 0; i < count; ++i) {
      const int label = i % cfg.classes;
      rng::Stream es(rng::derive(cand_key, label_str,
                                 (static_cast<std::uint64_t>(tilt_idx) << 32) |
                                     static_cast<std::uint64_t>(i)));
      bool placed = false;
      for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
        std::vector<std::size_t> tokens(static_cast<std::size_t>(cfg.tokens_per_example));
        for (auto& tok : tokens) {
          if (es.uniform() < cfg.distractor_rate) {
            tok = static_cast<std::size_t>(es.below(n));
          } else {
            // The tilt biases non-zero classes toward the class-0 pool, which
            // miscalibrates the zero-shot decision without erasing the signal.
            std::size_t pool = static_cast<std::size_t>(label);
            if (label != 0 && es.uniform() < tilt) pool = 0;
            tok = pools[pool][es.below(pools[pool].size())];
          }
        }
        if (seen.insert(tokens).second) {
          out.push_back(TaskExample{std::move(tokens), label});
          placed = true;
        }
      }
      if (!placed) return std::nullopt;  // could not keep the split duplicate-free
    }
  }
  return task;
}

}  // namespace

SyntheticTask make_task(const ToyModel& m, const TaskGenConfig& cfg) {
  if (cfg.classes < 2) throw UsageError("make_task: classes must be >= 2");
  if (cfg.classes >= m.vocab_size()) throw UsageError("make_task: classes must be < vocab");
  if (cfg.train_examples < 1 || cfg.eval_examples < 1) {
    throw UsageError("make_task: example counts must be >= 1");
  }
  if (cfg.tokens_per_example < 1) throw UsageError("make_task: tokens_per_example must be >= 1");
  if (!(cfg.separation > 0.0 && cfg.separation <= 1.0)) {
    throw UsageError("make_task: separation must be in (0, 1]");
  }
  if (!(cfg.distractor_rate >= 0.0 && cfg.distractor_rate < 1.0)) {
    throw UsageError("make_task: distractor_rate must be in [0, 1)");
  }
  if (!(cfg.band_lo > 0.0 && cfg.band_lo <= cfg.band_hi && cfg.band_hi < 1.0)) {
    throw UsageError("make_task: need 0 < band_lo <= band_hi < 1");
  }
  if (cfg.retry_cap < 1) throw UsageError("make_task: retry_cap must be >= 1");

  const auto n = static_cast<std::uint64_t>(m.vocab_size());
  for (int retry = 0; retry < cfg.retry_cap; ++retry) {
    const std::uint64_t cand_key =
        rng::derive(cfg.seed, "task-candidate", static_cast<std::uint64_t>(retry));

    rng::Stream vs(rng::derive(cand_key, "verbalizers"));
    std::vector<std::size_t> verbs;
    for (int guard = 0; static_cast<int>(verbs.size()) < cfg.classes && guard < 10000; ++guard) {
      const auto v = static_cast<std::size_t>(vs.below(n));
      if (std::find(verbs.begin(), verbs.end(), v) == verbs.end()) verbs.push_back(v);
    }
    if (static_cast<int>(verbs.size()) < cfg.classes) continue;

    const auto pools = build_pools(m, verbs, cfg.separation);
    if (pools.empty()) continue;

    // Tilt sweep from 0 upward: the first value whose zero-shot accuracy
    // drops into the band is kept, so easy configs land near the band top.
    for (int tilt_idx = 0; tilt_idx < 20; ++tilt_idx) {
      const double tilt = 0.05 * tilt_idx;
      auto task = assemble_task(m, cfg, cand_key, tilt_idx, tilt, verbs, pools);
      if (!task) continue;
      task->id = "task-" + std::to_string(cfg.seed) + "-r" + std::to_string(retry) +
                 "-t" + std::to_string(tilt_idx);
      const double zs = zero_shot_eval(m, *task);
      if (zs >= cfg.band_lo && zs <= cfg.band_hi) return std::move(*task);
    }
  }
  throw NumericError(
      "make_task: no candidate reached zero-shot accuracy in [" +
      std::to_string(cfg.band_lo) + ", " + std::to_string(cfg.band_hi) + "] within " +
      std::to_string(cfg.retry_cap) +
      " retries; widen the band or adjust separation/distractor_rate");
}

std::vector<std::uint64_t> default_checkpoints(int steps) {
  const double unit = static_cast<double>(steps) / 20.0;
  std::vector<std::uint64_t> out;
  for (int k : {2, 5, 10, 20}) {
    auto s = static_cast<std::uint64_t>(std::llround(k * unit));
    s = std::max<std::uint64_t>(1, std::min<std::uint64_t>(s, static_cast<std::uint64_t>(steps)));
    out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Prompt init_prompt(InitStrategy strategy, const ToyModel& m, const SyntheticTask& task,
                   const PromptTuneConfig& cfg) {
  const Index l = cfg.prompt_length;
  const Index e = m.dim();
  if (l < 1) throw UsageError("init_prompt: prompt_length must be >= 1");

  Prompt p;
  p.model_id = m.id;
  p.init_strategy = to_string(strategy);
  p.task_tag = task.id;

  switch (strategy) {
    case InitStrategy::random: {
      rng::Counter c(rng::derive(cfg.seed, "init-random"));
      p.rows.resize(l, e);
      for (Index i = 0; i < l; ++i)
        for (Index j = 0; j < e; ++j)
          p.rows(i, j) = c.uniform(static_cast<std::uint64_t>(i * e + j)) - 0.5;
      break;
    }
    case InitStrategy::class_based: {
      const auto classes = static_cast<Index>(task.verbalizers.size());
      if (classes > l) {
        throw UsageError("init_prompt: class strategy needs prompt_length >= classes (" +
                         std::to_string(classes) + ")");
      }
      p.rows.resize(l, e);
      for (Index c = 0; c < classes; ++c) {
        const auto& verb = task.verbalizers[static_cast<std::size_t>(c)];
        check_tokens(m, verb, "verbalizer");
        if (verb.empty()) throw DataError("init_prompt: empty verbalizer");
        RowVector mean = RowVector::Zero(e);
        for (std::size_t v : verb) mean += m.table.embeddings.row(static_cast<Index>(v));
        p.rows.row(c) = mean / static_cast<double>(verb.size());
      }
      // Remaining rows sample the frequent-token head, capped at 5000 rows.
      const auto head = static_cast<std::uint64_t>(std::min<Index>(m.vocab_size(), 5000));
      rng::Stream st(rng::derive(cfg.seed, "init-class-fill"));
      for (Index i = classes; i < l; ++i) {
        p.rows.row(i) = m.table.embeddings.row(static_cast<Index>(st.below(head)));
      }
      break;
    }
    case InitStrategy::wayward: {
      if (cfg.wayward_anchor.empty()) {
        throw UsageError("init_prompt: wayward strategy requires anchor tokens");
      }
      check_tokens(m, cfg.wayward_anchor, "anchor");
      if (cfg.wayward_anchor.size() > static_cast<std::size_t>(l) &&
          !cfg.allow_anchor_truncation) {
        throw UsageError("init_prompt: anchor has " +
                         std::to_string(cfg.wayward_anchor.size()) +
                         " tokens but prompt_length is " + std::to_string(l) +
                         "; set allow_anchor_truncation to keep the first " +
                         std::to_string(l));
      }
      p.rows.resize(l, e);
      for (Index i = 0; i < l; ++i) {
        const std::size_t tok =
            cfg.wayward_anchor[static_cast<std::size_t>(i) % cfg.wayward_anchor.size()];
        p.rows.row(i) = m.table.embeddings.row(static_cast<Index>(tok));
      }
      break;
    }
    case InitStrategy::spot_analogue: {
      // Pre-tune a random-init prompt on a generated auxiliary task, then use
      // the result as the starting point for the real task.
      TaskGenConfig aux;
      aux.classes = 2;
      aux.train_examples = 64;
      aux.eval_examples = 192;
      aux.tokens_per_example = 8;
      aux.separation = 0.8;
      aux.distractor_rate = 0.3;
      aux.band_lo = 0.50;
      aux.band_hi = 0.95;
      aux.seed = rng::derive(cfg.seed, "spot-aux-task");
      const SyntheticTask aux_task = make_task(m, aux);

      PromptTuneConfig pre = cfg;
      pre.init = InitStrategy::random;
      pre.steps = std::max(1, cfg.spot_pretune_steps);
      pre.checkpoint_steps = {static_cast<std::uint64_t>(pre.steps)};
      pre.seed = rng::derive(cfg.seed, "spot-pretune");
      p = prompt_tune(m, aux_task, pre).final;
      p.init_strategy = to_string(strategy);
      p.train_step = 0;
      p.task_tag = task.id;
      break;
    }
  }
  return p;
}

double wayward_penalty(const Matrix& p, const Matrix& p0, double gamma) {
  if (gamma < 0.0) throw UsageError("wayward_penalty: gamma must be >= 0");
  if (p.rows() != p0.rows() || p.cols() != p0.cols()) {
    throw DataError("wayward_penalty: prompt and anchor shapes differ");
  }
  if (p.rows() == 0) throw DataError("wayward_penalty: empty prompt");
  return gamma * (p - p0).squaredNorm() / static_cast<double>(p.rows());
}

namespace {

struct LossAccum {
  double loss = 0.0;
  RowVector du_sum;  // sum over examples of d(loss_ex)/d(any prompt row)
};

LossAccum batch_loss(const ToyModel& m, const Matrix& prompt_rows,
                     const SyntheticTask& task, std::span<const TaskExample> batch,
                     bool want_grad) {
  if (batch.empty()) throw DataError("prompt_loss: empty batch");
  if (prompt_rows.cols() != m.dim()) {
    throw DataError("prompt_loss: prompt width " + std::to_string(prompt_rows.cols()) +
                    " does not match model dim " + std::to_string(m.dim()));
  }
  const Index e = m.dim();
  const Index l = prompt_rows.rows();
  const auto classes = task.verbalizers.size();
  if (classes != static_cast<std::size_t>(task.classes) || classes < 2) {
    throw DataError("prompt_loss: task '" + task.id + "' has a bad verbalizer set");
  }

  // Mean verbalizer embedding per class; scores are linear in these.
  Matrix vb(static_cast<Index>(classes), e);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto& verb = task.verbalizers[c];
    if (verb.empty()) throw DataError("prompt_loss: empty verbalizer");
    check_tokens(m, verb, "verbalizer");
    RowVector mean = RowVector::Zero(e);
    for (std::size_t v : verb) mean += m.table.embeddings.row(static_cast<Index>(v));
    vb.row(static_cast<Index>(c)) = mean / static_cast<double>(verb.size());
  }

  LossAccum acc;
  acc.du_sum = RowVector::Zero(e);

  for (const TaskExample& ex : batch) {
    if (ex.label < 0 || ex.label >= static_cast<int>(classes)) {
      throw DataError("prompt_loss: example label " + std::to_string(ex.label) +
                      " out of range");
    }
    check_tokens(m, ex.tokens, "input");
    const Index r = l + static_cast<Index>(ex.tokens.size());
    if (r == 0) throw DataError("prompt_loss: prompt and input are both empty");

    RowVector u = RowVector::Zero(e);
    if (l > 0) u = prompt_rows.colwise().sum();
    for (std::size_t t : ex.tokens) u += m.table.embeddings.row(static_cast<Index>(t));
    u /= static_cast<double>(r);

    const RowVector z = u * m.w;
    RowVector h, hp;  // activation and its derivative
    if (m.g == Nonlinearity::tanh_g) {
      h = z.array().tanh();
      hp = 1.0 - h.array().square();
    } else {
      h = z;
      hp = RowVector::Ones(e);
    }

    Vector s = vb * h.transpose();
    const double lm = s.maxCoeff();
    Vector ex_s = (s.array() - lm).exp();
    const double zsum = ex_s.sum();
    acc.loss += std::log(zsum) - (s(ex.label) - lm);

    if (want_grad) {
      Vector ds = ex_s / zsum;  // softmax probabilities
      ds(ex.label) -= 1.0;
      const RowVector gvec = ds.transpose() * vb;
      const RowVector dz = gvec.cwiseProduct(hp);
      acc.du_sum += (dz * m.w.transpose()) / static_cast<double>(r);
    }
  }
  return acc;
}

}  // namespace

double prompt_loss(const ToyModel& m, const Matrix& prompt_rows,
                   const SyntheticTask& task, std::span<const TaskExample> batch,
                   const Matrix* anchor, double gamma) {
  LossAccum acc = batch_loss(m, prompt_rows, task, batch, /*want_grad=*/false);
  double loss = acc.loss / static_cast<double>(batch.size());
  if (anchor != nullptr) loss += wayward_penalty(prompt_rows, *anchor, gamma);
  return loss;
}

std::pair<double, Matrix> prompt_loss_and_grad(const ToyModel& m,
                                               const Matrix& prompt_rows,
                                               const SyntheticTask& task,
                                               std::span<const TaskExample> batch,
                                               const Matrix* anchor, double gamma) {
  LossAccum acc = batch_loss(m, prompt_rows, task, batch, /*want_grad=*/true);
  const auto b = static_cast<double>(batch.size());
  double loss = acc.loss / b;

  Matrix grad(prompt_rows.rows(), prompt_rows.cols());
  const RowVector per_row = acc.du_sum / b;
  for (Index i = 0; i < grad.rows(); ++i) grad.row(i) = per_row;

  if (anchor != nullptr) {
    loss += wayward_penalty(prompt_rows, *anchor, gamma);
    grad += (2.0 * gamma / static_cast<double>(prompt_rows.rows())) * (prompt_rows - *anchor);
  }
  return {loss, std::move(grad)};
}

TuneResult prompt_tune(const ToyModel& m, const SyntheticTask& task,
                       const PromptTuneConfig& cfg) {
  if (cfg.steps < 1) throw UsageError("prompt_tune: steps must be >= 1");
  if (cfg.batch_size < 1) throw UsageError("prompt_tune: batch_size must be >= 1");
  if (cfg.learning_rate <= 0.0) throw UsageError("prompt_tune: learning_rate must be > 0");
  if (cfg.wayward_gamma < 0.0) throw UsageError("prompt_tune: wayward_gamma must be >= 0");
  if (task.train.empty()) throw DataError("prompt_tune: task has no train split");

  std::vector<std::uint64_t> ckpts =
      cfg.checkpoint_steps.empty() ? default_checkpoints(cfg.steps) : cfg.checkpoint_steps;
  std::sort(ckpts.begin(), ckpts.end());
  ckpts.erase(std::unique(ckpts.begin(), ckpts.end()), ckpts.end());
  for (std::uint64_t s : ckpts) {
    if (s < 1 || s > static_cast<std::uint64_t>(cfg.steps)) {
      throw UsageError("prompt_tune: checkpoint step " + std::to_string(s) +
                       " outside [1, " + std::to_string(cfg.steps) + "]");
    }
  }

  Prompt p = init_prompt(cfg.init, m, task, cfg);
  const bool wayward = cfg.init == InitStrategy::wayward;
  const Matrix anchor = wayward ? p.rows : Matrix();

  Matrix mom = Matrix::Zero(p.rows.rows(), p.rows.cols());
  Matrix vel = mom;

  const auto n = task.train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t pos = n;  // forces a shuffle before the first batch
  std::uint64_t epoch = 0;

  TuneResult result;
  std::vector<TaskExample> batch;
  for (int step = 1; step <= cfg.steps; ++step) {
    batch.clear();
    for (int k = 0; k < cfg.batch_size; ++k) {
      if (pos == n) {
        rng::Stream sh(rng::derive(cfg.seed, "tune-shuffle", epoch++));
        sh.shuffle(order);
        pos = 0;
      }
      batch.push_back(task.train[order[pos++]]);
    }

    auto [loss, grad] = prompt_loss_and_grad(m, p.rows, task, batch,
                                             wayward ? &anchor : nullptr,
                                             cfg.wayward_gamma);
    result.step_losses.push_back(loss);

    const auto t = static_cast<double>(step);
    mom = cfg.beta1 * mom + (1.0 - cfg.beta1) * grad;
    vel = cfg.beta2 * vel.array().matrix() + (1.0 - cfg.beta2) * grad.array().square().matrix();
    const double mc = 1.0 - std::pow(cfg.beta1, t);
    const double vc = 1.0 - std::pow(cfg.beta2, t);
    p.rows.array() -=
        cfg.learning_rate * (mom.array() / mc) / ((vel.array() / vc).sqrt() + cfg.epsilon);

    if (std::binary_search(ckpts.begin(), ckpts.end(), static_cast<std::uint64_t>(step))) {
      Prompt snap = p;
      snap.train_step = static_cast<std::uint64_t>(step);
      result.checkpoints.push_back(std::move(snap));
    }
  }
  p.train_step = static_cast<std::uint64_t>(cfg.steps);
  result.final = std::move(p);
  return result;
}

Prompt compose_prompts(const Prompt& a, const Prompt& b, ComposeMode mode) {
  if (a.dim() != b.dim()) {
    throw DataError("compose_prompts: widths differ: " + std::to_string(a.dim()) +
                    " vs " + std::to_string(b.dim()));
  }
  Prompt out;
  if (mode == ComposeMode::concat) {
    out.rows.resize(a.length() + b.length(), a.dim());
    out.rows.topRows(a.length()) = a.rows;
    out.rows.bottomRows(b.length()) = b.rows;
  } else {
    if (a.length() == b.length()) {
      out.rows = a.rows + b.rows;
    } else if (a.length() == 1) {
      out.rows = b.rows.rowwise() + a.rows.row(0);
    } else if (b.length() == 1) {
      out.rows = a.rows.rowwise() + b.rows.row(0);
    } else {
      throw DataError("compose_prompts: broadcast_add needs equal lengths or a "
                      "length-1 operand (got " + std::to_string(a.length()) + " and " +
                      std::to_string(b.length()) + ")");
    }
  }
  out.model_id = a.model_id == b.model_id ? a.model_id : "";
  out.init_strategy = "composed";
  out.train_step = std::max(a.train_step, b.train_step);
  out.task_tag = a.task_tag == b.task_tag ? a.task_tag : "";
  return out;
}

}  // namespace prcy::toy
