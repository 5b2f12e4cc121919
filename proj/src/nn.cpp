// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#include "prcy/nn.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "prcy/rng.hpp"

namespace prcy::nn {

namespace {

void check_dims(const MlpNet& net, const Matrix& x) {
  if (x.cols() != net.in_dim()) {
    throw DataError("mlp: input width " + std::to_string(x.cols()) +
                    " does not match net input dim " + std::to_string(net.in_dim()));
  }
}

void check_pair(const MlpNet& net, const Matrix& x, const Matrix& y) {
  check_dims(net, x);
  if (y.cols() != net.out_dim()) {
    throw DataError("mlp: target width " + std::to_string(y.cols()) +
                    " does not match net output dim " + std::to_string(net.out_dim()));
  }
  if (x.rows() != y.rows()) {
    throw DataError("mlp: batch sizes differ: x has " + std::to_string(x.rows()) +
                    " rows, y has " + std::to_string(y.rows()));
  }
  if (x.rows() == 0) throw DataError("mlp: empty batch");
}

}  // namespace

MlpNet make_mlp(Index in_dim, Index out_dim, std::uint64_t seed) {
  if (in_dim < 1 || out_dim < 1) throw UsageError("make_mlp: dims must be >= 1");
  const Index hidden = 4 * out_dim;

  rng::Counter c(rng::derive(seed, "mlp-init"));
  std::uint64_t pos = 0;
  auto uniform_pm = [&](double bound) {
    return (2.0 * c.uniform(pos++) - 1.0) * bound;
  };

  MlpNet net;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
  net.w1.resize(in_dim, hidden);
  for (Index i = 0; i < in_dim; ++i)
    for (Index j = 0; j < hidden; ++j) net.w1(i, j) = uniform_pm(s1);
  net.b1.resize(hidden);
  for (Index j = 0; j < hidden; ++j) net.b1(j) = uniform_pm(s1);

  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  net.w2.resize(hidden, out_dim);
  for (Index i = 0; i < hidden; ++i)
    for (Index j = 0; j < out_dim; ++j) net.w2(i, j) = uniform_pm(s2);
  net.b2.resize(out_dim);
  for (Index j = 0; j < out_dim; ++j) net.b2(j) = uniform_pm(s2);
  return net;
}

AdamState make_adam_state(const MlpNet& net) {
  AdamState st;
  st.m_w1 = Matrix::Zero(net.w1.rows(), net.w1.cols());
  st.v_w1 = st.m_w1;
  st.m_b1 = Vector::Zero(net.b1.size());
  st.v_b1 = st.m_b1;
  st.m_w2 = Matrix::Zero(net.w2.rows(), net.w2.cols());
  st.v_w2 = st.m_w2;
  st.m_b2 = Vector::Zero(net.b2.size());
  st.v_b2 = st.m_b2;
  return st;
}

Matrix mlp_forward(const MlpNet& net, const Matrix& x) {
  check_dims(net, x);
  Matrix a1 = ((x * net.w1).rowwise() + net.b1.transpose()).cwiseMax(0.0);
  return (a1 * net.w2).rowwise() + net.b2.transpose();
}

double mlp_loss(const MlpNet& net, const Matrix& x, const Matrix& y) {
  check_pair(net, x, y);
  const Matrix diff = mlp_forward(net, x) - y;
  return diff.squaredNorm() / static_cast<double>(x.rows() * y.cols());
}

double mlp_loss_and_grads(const MlpNet& net, const Matrix& x, const Matrix& y,
                          MlpGrads& grads) {
  check_pair(net, x, y);

  const Matrix z1 = (x * net.w1).rowwise() + net.b1.transpose();
  const Matrix a1 = z1.cwiseMax(0.0);
  const Matrix yhat = (a1 * net.w2).rowwise() + net.b2.transpose();

  const Matrix diff = yhat - y;
  const double denom = static_cast<double>(x.rows() * y.cols());
  const double loss = diff.squaredNorm() / denom;

  const Matrix dy = (2.0 / denom) * diff;
  grads.w2.noalias() = a1.transpose() * dy;
  grads.b2 = dy.colwise().sum().transpose();
  // ReLU subgradient: zero at the kink.
  const Matrix dz1 = (dy * net.w2.transpose()).cwiseProduct(
      (z1.array() > 0.0).cast<double>().matrix());
  grads.w1.noalias() = x.transpose() * dz1;
  grads.b1 = dz1.colwise().sum().transpose();
  return loss;
}

namespace {

template <typename P, typename G>
void adam_update_block(P& param, const G& grad, P& m, P& v, double lr, double b1,
                       double b2, double eps, double t) {
  m = b1 * m + (1.0 - b1) * grad;
  v = b2 * v.array().matrix() + (1.0 - b2) * grad.array().square().matrix();
  const double mc = 1.0 - std::pow(b1, t);
  const double vc = 1.0 - std::pow(b2, t);
  param.array() -= lr * (m.array() / mc) / ((v.array() / vc).sqrt() + eps);
}

}  // namespace

void adam_step(MlpNet& net, const MlpGrads& grads, AdamState& state,
               const MlpTrainConfig& cfg) {
  if (grads.w1.rows() != net.w1.rows() || grads.w1.cols() != net.w1.cols() ||
      grads.w2.rows() != net.w2.rows() || grads.w2.cols() != net.w2.cols() ||
      grads.b1.size() != net.b1.size() || grads.b2.size() != net.b2.size()) {
    throw DataError("adam_step: gradient shapes do not match parameters");
  }
  state.step += 1;
  const auto t = static_cast<double>(state.step);
  adam_update_block(net.w1, grads.w1, state.m_w1, state.v_w1, cfg.learning_rate,
                    cfg.beta1, cfg.beta2, cfg.epsilon, t);
  adam_update_block(net.b1, grads.b1, state.m_b1, state.v_b1, cfg.learning_rate,
                    cfg.beta1, cfg.beta2, cfg.epsilon, t);
  adam_update_block(net.w2, grads.w2, state.m_w2, state.v_w2, cfg.learning_rate,
                    cfg.beta1, cfg.beta2, cfg.epsilon, t);
  adam_update_block(net.b2, grads.b2, state.m_b2, state.v_b2, cfg.learning_rate,
                    cfg.beta1, cfg.beta2, cfg.epsilon, t);
}

MlpNet mlp_train(const Matrix& x, const Matrix& y, const MlpTrainConfig& cfg) {
  if (cfg.epochs < 1) throw UsageError("mlp_train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw UsageError("mlp_train: batch_size must be >= 1");
  if (cfg.learning_rate <= 0.0) throw UsageError("mlp_train: learning_rate must be > 0");
  if (x.rows() != y.rows()) {
    throw DataError("mlp_train: x and y row counts differ");
  }
  if (x.rows() == 0) throw DataError("mlp_train: empty training set");

  MlpNet net = make_mlp(x.cols(), y.cols(), cfg.seed);
  AdamState state = make_adam_state(net);
  MlpGrads grads;

  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::Stream shuffler(rng::derive(cfg.seed, "mlp-shuffle", static_cast<std::uint64_t>(epoch)));
    shuffler.shuffle(order);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(n - start, static_cast<std::size_t>(cfg.batch_size));
      Matrix bx(static_cast<Index>(count), x.cols());
      Matrix by(static_cast<Index>(count), y.cols());
      for (std::size_t i = 0; i < count; ++i) {
        bx.row(static_cast<Index>(i)) = x.row(static_cast<Index>(order[start + i]));
        by.row(static_cast<Index>(i)) = y.row(static_cast<Index>(order[start + i]));
      }
      mlp_loss_and_grads(net, bx, by, grads);
      adam_step(net, grads, state, cfg);
    }
  }
  return net;
}

}  // namespace prcy::nn
