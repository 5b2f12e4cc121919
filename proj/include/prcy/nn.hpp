// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "prcy/types.hpp"

namespace prcy::nn {

// Two-layer perceptron y = relu(x W1 + b1) W2 + b2 operating on row batches,
// trained with Adam on mean-squared error.  Gradients are hand-derived and
// covered by finite-difference tests.

struct MlpNet {
  Matrix w1;  // in x hidden
  Vector b1;  // hidden
  Matrix w2;  // hidden x out
  Vector b2;  // out

  Index in_dim() const { return w1.rows(); }
  Index hidden_dim() const { return w1.cols(); }
  Index out_dim() const { return w2.cols(); }
};

struct MlpGrads {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
};

// First/second moment accumulators plus the shared step counter.
struct AdamState {
  Matrix m_w1, v_w1;
  Vector m_b1, v_b1;
  Matrix m_w2, v_w2;
  Vector m_b2, v_b2;
  std::uint64_t step = 0;
};

struct MlpTrainConfig {
  int epochs = 25;
  int batch_size = 50;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

// Fresh net with hidden width 4 * out_dim and uniform(-1/sqrt(fan_in),
// 1/sqrt(fan_in)) entries drawn from a counter stream keyed on seed.
MlpNet make_mlp(Index in_dim, Index out_dim, std::uint64_t seed);

AdamState make_adam_state(const MlpNet& net);

Matrix mlp_forward(const MlpNet& net, const Matrix& x);

// Mean-squared-error loss over all outputs: |yhat - y|_F^2 / (batch * out).
double mlp_loss(const MlpNet& net, const Matrix& x, const Matrix& y);

double mlp_loss_and_grads(const MlpNet& net, const Matrix& x, const Matrix& y,
                          MlpGrads& grads);

// One Adam update with bias correction.  A zero gradient advances the step
// counter but leaves the parameters unchanged.
void adam_step(MlpNet& net, const MlpGrads& grads, AdamState& state,
               const MlpTrainConfig& cfg);

// Full training loop: seed-derived init, per-epoch seed-derived shuffles,
// final short batch included.  x and y are row-aligned training pairs.
MlpNet mlp_train(const Matrix& x, const Matrix& y, const MlpTrainConfig& cfg);

}  // namespace prcy::nn
