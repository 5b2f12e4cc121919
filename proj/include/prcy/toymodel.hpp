// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prcy/prompt.hpp"
#include "prcy/types.hpp"
#include "prcy/vocab.hpp"

namespace prcy::toy {

// Desk-scale frozen models.  A model is an embedding table (N x E) plus an
// interaction matrix W (E x E) and an elementwise nonlinearity g.  Scoring a
// token sequence under a prompt P and a verbalizer sequence V:
//
//   u = mean of the L prompt rows and the T input-token embeddings
//   h = g(u W)
//   score = mean over v in V of  table[v] . h
//
// Classification picks the class whose verbalizer scores highest (ties go to
// the lowest class index).  Models are never mutated by tuning or recycling.

enum class Nonlinearity { tanh_g, linear_g };

std::string to_string(Nonlinearity g);
Nonlinearity parse_nonlinearity(std::string_view name);

struct ToyModel {
  std::string id;
  vocab::EmbeddingTable table;  // table.model_id mirrors id
  Matrix w;                     // E x E
  Nonlinearity g = Nonlinearity::tanh_g;

  Index vocab_size() const { return table.vocab_size(); }
  Index dim() const { return table.dim(); }
};

// Gaussian-filled model, entries scaled by 1/sqrt(E) so activations stay O(1).
ToyModel make_model(Index vocab, Index dim, Nonlinearity g, std::uint64_t seed,
                    std::string id = "");

// Twin construction.  exact: G is a random signed permutation, giving a twin
// whose decisions match the source bit-for-bit on every input (signed
// permutations commute with odd elementwise g).  rotated: G is a random
// orthogonal matrix and eta scales additive Gaussian noise on both the table
// and W.
struct TwinSpec {
  enum class Mode { exact, rotated };
  Mode mode = Mode::exact;
  double eta = 0.0;
  std::uint64_t seed = 0;
};

std::string to_string(TwinSpec::Mode mode);
TwinSpec::Mode parse_twin_mode(std::string_view name);

struct TwinResult {
  ToyModel twin;
  Matrix g;  // E x E ground-truth correspondence: v_twin = v_source G
};

TwinResult make_twin(const ToyModel& m, const TwinSpec& spec);

// Synthetic classification tasks.  Examples are short token sequences; the
// generator builds per-class signal pools from the model's own scoring
// geometry and then biases non-zero classes toward the class-0 pool ("tilt")
// until the zero-shot accuracy lands inside the configured band, which
// guarantees headroom for tuning.
struct TaskExample {
  std::vector<std::size_t> tokens;
  int label = 0;
};

struct SyntheticTask {
  std::string id;
  int classes = 2;
  std::vector<std::vector<std::size_t>> verbalizers;  // one sequence per class
  std::vector<TaskExample> train;
  std::vector<TaskExample> eval;
};

struct TaskGenConfig {
  int classes = 2;
  int train_examples = 128;
  int eval_examples = 384;
  int tokens_per_example = 8;
  double separation = 0.8;      // margin-quantile cutoff for signal pools, in (0, 1]
  double distractor_rate = 0.25;  // chance a slot is a uniform random token
  double band_lo = 0.55;        // accepted zero-shot accuracy band on the eval split
  double band_hi = 0.90;
  int retry_cap = 40;
  std::uint64_t seed = 0;
};

// Throws NumericError if no candidate within retry_cap lands in the band.
SyntheticTask make_task(const ToyModel& m, const TaskGenConfig& cfg);

double model_score(const ToyModel& m, const Prompt& p,
                   std::span<const std::size_t> input,
                   std::span<const std::size_t> verbalizer);

// Per-class scores for one input, sharing the forward pass.
std::vector<double> class_scores(const ToyModel& m, const Prompt& p,
                                 std::span<const std::size_t> input,
                                 const SyntheticTask& task);

int rank_classify(const ToyModel& m, const Prompt& p,
                  std::span<const std::size_t> input, const SyntheticTask& task);

enum class Split { train, eval };

double eval_accuracy(const ToyModel& m, const Prompt& p, const SyntheticTask& task,
                     Split split);

inline double zero_shot_eval(const ToyModel& m, const SyntheticTask& task,
                             Split split = Split::eval) {
  return eval_accuracy(m, zero_shot_prompt(m.dim(), m.id, task.id), task, split);
}

// Prompt tuning.  The model stays frozen; only the L x E prompt matrix gets
// gradients (softmax cross-entropy over class scores, Adam updates).
enum class InitStrategy { random, class_based, spot_analogue, wayward };

std::string to_string(InitStrategy s);
InitStrategy parse_init_strategy(std::string_view name);

struct PromptTuneConfig {
  InitStrategy init = InitStrategy::random;
  Index prompt_length = 8;
  int steps = 200;
  int batch_size = 16;
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Empty means default_checkpoints(steps).
  std::vector<std::uint64_t> checkpoint_steps;
  // Wayward regularisation toward the embedded anchor sequence.
  double wayward_gamma = 0.01;
  std::vector<std::size_t> wayward_anchor;  // required for InitStrategy::wayward
  bool allow_anchor_truncation = false;     // anchors longer than L need this
  int spot_pretune_steps = 100;             // steps for the spot-analogue pre-tune
  std::uint64_t seed = 0;
};

// The canonical checkpoint ladder {2, 5, 10, 20} scaled to steps/20 each.
std::vector<std::uint64_t> default_checkpoints(int steps);

Prompt init_prompt(InitStrategy strategy, const ToyModel& m, const SyntheticTask& task,
                   const PromptTuneConfig& cfg);

// gamma * |p - p0|_F^2 / L.
double wayward_penalty(const Matrix& p, const Matrix& p0, double gamma);

// Batch loss (mean cross-entropy, plus the wayward term when anchor != null)
// and its gradient with respect to the prompt rows.
double prompt_loss(const ToyModel& m, const Matrix& prompt_rows,
                   const SyntheticTask& task, std::span<const TaskExample> batch,
                   const Matrix* anchor, double gamma);
std::pair<double, Matrix> prompt_loss_and_grad(const ToyModel& m,
                                               const Matrix& prompt_rows,
                                               const SyntheticTask& task,
                                               std::span<const TaskExample> batch,
                                               const Matrix* anchor, double gamma);

struct TuneResult {
  Prompt final;
  std::vector<Prompt> checkpoints;  // at the configured steps, ascending
  std::vector<double> step_losses;  // training loss per step, diagnostics only
};

TuneResult prompt_tune(const ToyModel& m, const SyntheticTask& task,
                       const PromptTuneConfig& cfg);

// Prompt composition in a shared embedding space.
enum class ComposeMode { concat, broadcast_add };

Prompt compose_prompts(const Prompt& a, const Prompt& b, ComposeMode mode);

}  // namespace prcy::toy
