// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "prcy/prompt.hpp"
#include "prcy/toymodel.hpp"
#include "prcy/types.hpp"

namespace prcy::stats {

struct SummaryStats {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1); 0 when n == 1
  std::size_t n = 0;
};

SummaryStats summarize(std::span<const double> xs);

// Welch's unequal-variances t-test from summary statistics.  Two-sided p is
// computed as I_x(df/2, 1/2) with x = df/(df + t^2) via the regularized
// incomplete beta, accurate to well under 1e-9 in absolute terms.  Requires
// n >= 2 in both groups; throws NumericError when both variances are zero.
struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;

  bool significant(double alpha = 0.05) const { return p < alpha; }
};

WelchResult welch_t_from_stats(const SummaryStats& a, const SummaryStats& b);

// Exposed for direct oracle tests.  Continued-fraction (modified Lentz)
// evaluation; throws NumericError if the fraction fails to converge.
double regularized_incomplete_beta(double a, double b, double x);

// Fraction of xs strictly above the threshold.
double fraction_above(std::span<const double> xs, double threshold);

// Random-prompt baseline: prompts with i.i.d. N(0, sigma^2) entries, scored
// on the task's eval split.  Draw i is a pure function of (seed, i).
struct RandomPromptConfig {
  Index prompt_length = 8;
  double sigma = 16.0;
  int draws = 100;
  std::uint64_t seed = 0;
};

inline constexpr std::array<double, 5> kDefaultSigmaGrid = {4.0, 8.0, 16.0, 32.0, 64.0};

Prompt sample_random_prompt(const toy::ToyModel& m, const RandomPromptConfig& cfg,
                            int draw_index);

// Accuracies for all draws, in draw order regardless of thread count.
std::vector<double> random_baseline_accuracies(const toy::ToyModel& m,
                                               const toy::SyntheticTask& task,
                                               const RandomPromptConfig& cfg,
                                               int threads = 1);

struct BaselineStats {
  double sigma = 0.0;
  SummaryStats accuracy;
};

// Requires draws >= 2 so the sd is defined.
BaselineStats random_baseline(const toy::ToyModel& m, const toy::SyntheticTask& task,
                              const RandomPromptConfig& cfg, int threads = 1);

// Runs the baseline at every sigma in the grid (each with a seed derived from
// the sigma value, so grid order cannot matter) and picks the best mean
// accuracy, breaking ties toward the smaller sigma.
struct SigmaGridResult {
  double best_sigma = 0.0;
  SummaryStats best;
  std::vector<BaselineStats> per_sigma;  // in grid order
};

SigmaGridResult sigma_grid_search(const toy::ToyModel& m, const toy::SyntheticTask& task,
                                  const RandomPromptConfig& base,
                                  std::span<const double> grid, int threads = 1);

}  // namespace prcy::stats
