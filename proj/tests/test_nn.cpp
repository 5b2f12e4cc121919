// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <prcy/nn.hpp>
#include <prcy/rng.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

using namespace prcy;
using namespace prcy::nn;

namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  rng::Counter gen(seed);
  Matrix m(rows, cols);
  std::uint64_t k = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * gen.gaussian(k++);
  return m;
}

double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// Scalar-loop forward oracle, no Eigen products.
Matrix forward_oracle(const MlpNet& net, const Matrix& x) {
  const Index batch = x.rows();
  const Index hidden = net.w1.cols();
  const Index out = net.w2.cols();
  Matrix yhat(batch, out);
  for (Index b = 0; b < batch; ++b) {
    std::vector<double> h(static_cast<std::size_t>(hidden), 0.0);
    for (Index j = 0; j < hidden; ++j) {
      double z = net.b1(j);
      for (Index i = 0; i < x.cols(); ++i) z += x(b, i) * net.w1(i, j);
      h[static_cast<std::size_t>(j)] = z > 0.0 ? z : 0.0;
    }
    for (Index o = 0; o < out; ++o) {
      double z = net.b2(o);
      for (Index j = 0; j < hidden; ++j)
        z += h[static_cast<std::size_t>(j)] * net.w2(j, o);
      yhat(b, o) = z;
    }
  }
  return yhat;
}

}  // namespace

TEST_CASE("make_mlp: hidden is 4x output dim, init bounded by 1/sqrt(fan_in), deterministic") {
  const MlpNet net = make_mlp(6, 3, 99);
  CHECK(net.w1.rows() == 6);
  CHECK(net.w1.cols() == 12);
  CHECK(net.b1.size() == 12);
  CHECK(net.w2.rows() == 12);
  CHECK(net.w2.cols() == 3);
  CHECK(net.b2.size() == 3);
  CHECK(max_abs(net.w1) <= 1.0 / std::sqrt(6.0));
  CHECK(max_abs(net.w2) <= 1.0 / std::sqrt(12.0));
  const MlpNet again = make_mlp(6, 3, 99);
  CHECK((net.w1.array() == again.w1.array()).all());
  CHECK((net.b1.array() == again.b1.array()).all());
  CHECK((net.w2.array() == again.w2.array()).all());
  CHECK((net.b2.array() == again.b2.array()).all());
  const MlpNet other = make_mlp(6, 3, 100);
  CHECK(max_abs(net.w1 - other.w1) > 0.0);
}

TEST_CASE("mlp_forward: all-zero parameters give the zero matrix") {
  MlpNet net = make_mlp(2, 1, 1);
  net.w1.setZero();
  net.b1.setZero();
  net.w2.setZero();
  net.b2.setZero();
  Matrix x(3, 2);
  x << 1, 2, -3, 4, 5, -6;
  const Matrix y = mlp_forward(net, x);
  CHECK(max_abs(y) == 0.0);
}

TEST_CASE("mlp_forward: ReLU gates a negative pre-activation to zero") {
  // H = 4*E_t = 4 for E_t = 1; route everything through hidden unit 0.
  MlpNet net = make_mlp(2, 1, 2);
  net.w1.setZero();
  net.b1.setZero();
  net.w2.setZero();
  net.b2.setZero();
  net.w1(0, 0) = 1.0;  // unit 0 sees x[0]
  net.w2(0, 0) = 1.0;
  Matrix x(1, 2);
  x << -3, 7;
  const Matrix y = mlp_forward(net, x);
  REQUIRE(y.rows() == 1);
  REQUIRE(y.cols() == 1);
  CHECK(y(0, 0) == 0.0);
  x(0, 0) = 3;  // now relu passes the value through
  CHECK(mlp_forward(net, x)(0, 0) == 3.0);
}

TEST_CASE("mlp_forward: matches scalar-loop oracle to 1e-12") {
  const MlpNet net = make_mlp(5, 3, 7);
  const Matrix x = random_matrix(9, 5, rng::derive(7, "fwd-x"));
  const Matrix y = mlp_forward(net, x);
  const Matrix oracle = forward_oracle(net, x);
  CHECK(max_abs(y - oracle) <= 1e-12);
}

TEST_CASE("mlp_forward: width mismatch throws DataError") {
  const MlpNet net = make_mlp(4, 2, 3);
  CHECK_THROWS_AS(mlp_forward(net, Matrix::Zero(2, 5)), DataError);
}

TEST_CASE("mlp_loss_and_grads: perfect prediction gives zero loss and zero gradients") {
  const MlpNet net = make_mlp(3, 2, 11);
  const Matrix x = random_matrix(4, 3, rng::derive(11, "zl-x"));
  const Matrix y = mlp_forward(net, x);
  MlpGrads grads;
  const double loss = mlp_loss_and_grads(net, x, y, grads);
  CHECK(loss == 0.0);
  CHECK(max_abs(grads.w1) == 0.0);
  CHECK(max_abs(Matrix(grads.b1.transpose())) == 0.0);
  CHECK(max_abs(grads.w2) == 0.0);
  CHECK(max_abs(Matrix(grads.b2.transpose())) == 0.0);
}

TEST_CASE("mlp_loss_and_grads: linear region matches closed-form linear gradients") {
  // Push all pre-activations positive with a large bias; then the net is the
  // affine map y = (x*W1 + b1)*W2 + b2 and gradient formulas are closed-form.
  MlpNet net = make_mlp(3, 2, 13);
  net.b1.array() += 10.0;  // every hidden unit active for small x
  const Matrix x = random_matrix(6, 3, rng::derive(13, "lin-x"), 0.1);
  const Matrix y = random_matrix(6, 2, rng::derive(13, "lin-y"), 0.1);
  const Matrix z1 = x * net.w1 + Matrix::Ones(6, 1) * net.b1.transpose();
  REQUIRE(z1.minCoeff() > 0.0);  // sanity: truly in the linear region
  const Matrix yhat = z1 * net.w2 + Matrix::Ones(6, 1) * net.b2.transpose();
  const double batch_out = 6.0 * 2.0;
  const Matrix dy = 2.0 * (yhat - y) / batch_out;
  const Matrix gw2 = z1.transpose() * dy;
  const Matrix gb2 = dy.colwise().sum();
  const Matrix dh = dy * net.w2.transpose();
  const Matrix gw1 = x.transpose() * dh;
  const Matrix gb1 = dh.colwise().sum();
  MlpGrads grads;
  const double loss = mlp_loss_and_grads(net, x, y, grads);
  CHECK(loss == doctest::Approx(((yhat - y).squaredNorm()) / batch_out).epsilon(1e-12));
  CHECK(max_abs(grads.w2 - gw2) <= 1e-12);
  CHECK(max_abs(Matrix(grads.b2.transpose() - gb2)) <= 1e-12);
  CHECK(max_abs(grads.w1 - gw1) <= 1e-12);
  CHECK(max_abs(Matrix(grads.b1.transpose() - gb1)) <= 1e-12);
}

TEST_CASE("mlp_loss_and_grads: central finite differences agree to 1e-4 relative") {
  for (int inst = 0; inst < 20; ++inst) {
    const std::uint64_t key = rng::derive(500 + inst, "fd-inst");
    rng::Stream dims(key);
    const Index es = static_cast<Index>(2 + dims.below(5));   // 2..6
    const Index et = static_cast<Index>(1 + dims.below(5));   // 1..5 (capped later by <=6)
    const Index batch = static_cast<Index>(1 + dims.below(5));  // 1..5
    MlpNet net = make_mlp(es, et, key);
    const Matrix x = random_matrix(batch, es, rng::derive(key, "fd-x"));
    const Matrix y = random_matrix(batch, et, rng::derive(key, "fd-y"));
    MlpGrads grads;
    mlp_loss_and_grads(net, x, y, grads);
    const double h = 1e-5;
    auto check_block = [&](Matrix& block, const Matrix& grad, const char* name) {
      for (Index i = 0; i < block.rows(); ++i) {
        for (Index j = 0; j < block.cols(); ++j) {
          const double saved = block(i, j);
          block(i, j) = saved + h;
          const double up = mlp_loss(net, x, y);
          block(i, j) = saved - h;
          const double down = mlp_loss(net, x, y);
          block(i, j) = saved;
          const double fd = (up - down) / (2.0 * h);
          const double g = grad(i, j);
          const double denom = std::max({std::abs(fd), std::abs(g), 1e-6});
          INFO("instance ", inst, " block ", name, " entry (", i, ",", j, ")");
          CHECK(std::abs(fd - g) / denom <= 1e-4);
        }
      }
    };
    // Skip instances whose pre-activations sit within 1e-7 of a ReLU kink.
    const Matrix z1 =
        x * net.w1 + Matrix::Ones(batch, 1) * net.b1.transpose();
    if (z1.cwiseAbs().minCoeff() < 1e-7) continue;
    check_block(net.w1, grads.w1, "w1");
    Matrix b1m = net.b1.transpose();
    Matrix gb1 = grads.b1.transpose();
    for (Index j = 0; j < b1m.cols(); ++j) {
      const double saved = net.b1(j);
      net.b1(j) = saved + h;
      const double up = mlp_loss(net, x, y);
      net.b1(j) = saved - h;
      const double down = mlp_loss(net, x, y);
      net.b1(j) = saved;
      const double fd = (up - down) / (2.0 * h);
      const double g = grads.b1(j);
      const double denom = std::max({std::abs(fd), std::abs(g), 1e-6});
      CHECK(std::abs(fd - g) / denom <= 1e-4);
    }
    check_block(net.w2, grads.w2, "w2");
    for (Index j = 0; j < net.b2.size(); ++j) {
      const double saved = net.b2(j);
      net.b2(j) = saved + h;
      const double up = mlp_loss(net, x, y);
      net.b2(j) = saved - h;
      const double down = mlp_loss(net, x, y);
      net.b2(j) = saved;
      const double fd = (up - down) / (2.0 * h);
      const double g = grads.b2(j);
      const double denom = std::max({std::abs(fd), std::abs(g), 1e-6});
      CHECK(std::abs(fd - g) / denom <= 1e-4);
    }
  }
}

TEST_CASE("adam_step: zero gradient leaves parameters unchanged and bumps the counter") {
  MlpNet net = make_mlp(2, 1, 21);
  const MlpNet before = net;
  MlpGrads grads;
  grads.w1 = Matrix::Zero(net.w1.rows(), net.w1.cols());
  grads.b1 = Vector::Zero(net.b1.size());
  grads.w2 = Matrix::Zero(net.w2.rows(), net.w2.cols());
  grads.b2 = Vector::Zero(net.b2.size());
  AdamState state = make_adam_state(net);
  MlpTrainConfig cfg;
  adam_step(net, grads, state, cfg);
  CHECK(state.step == 1);
  CHECK((net.w1.array() == before.w1.array()).all());
  CHECK((net.b1.array() == before.b1.array()).all());
  CHECK((net.w2.array() == before.w2.array()).all());
  CHECK((net.b2.array() == before.b2.array()).all());
}

TEST_CASE("adam_step: first step moves each parameter by about lr against the gradient sign") {
  MlpNet net = make_mlp(2, 1, 22);
  const MlpNet before = net;
  MlpGrads grads;
  grads.w1 = Matrix::Constant(net.w1.rows(), net.w1.cols(), 0.3);
  grads.b1 = Vector::Constant(net.b1.size(), -0.7);
  grads.w2 = Matrix::Constant(net.w2.rows(), net.w2.cols(), 5.0);
  grads.b2 = Vector::Constant(net.b2.size(), 1e-3);
  AdamState state = make_adam_state(net);
  MlpTrainConfig cfg;
  cfg.learning_rate = 3e-4;
  adam_step(net, grads, state, cfg);
  // After bias correction the first update is lr * g/(|g| + eps') ~= lr * sign(g).
  const double lr = cfg.learning_rate;
  CHECK(std::abs((before.w1(0, 0) - net.w1(0, 0)) - lr) <= lr * 1e-3);
  CHECK(std::abs((before.b1(0) - net.b1(0)) + lr) <= lr * 1e-3);
  CHECK(std::abs((before.w2(0, 0) - net.w2(0, 0)) - lr) <= lr * 1e-2);
}

TEST_CASE("adam_step: two steps with constant gradient match a scalar reference to 1e-12") {
  MlpNet net = make_mlp(1, 1, 23);  // W1 is 1x4, b1 4, W2 4x1, b2 1
  const double theta0 = net.w1(0, 0);
  const double g = 0.25;
  MlpGrads grads;
  grads.w1 = Matrix::Constant(1, 4, g);
  grads.b1 = Vector::Constant(4, g);
  grads.w2 = Matrix::Constant(4, 1, g);
  grads.b2 = Vector::Constant(1, g);
  AdamState state = make_adam_state(net);
  MlpTrainConfig cfg;
  adam_step(net, grads, state, cfg);
  adam_step(net, grads, state, cfg);
  CHECK(state.step == 2);
  // Scalar reference for the same two updates.
  double m = 0.0, v = 0.0, theta = theta0;
  for (int t = 1; t <= 2; ++t) {
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mhat = m / (1 - std::pow(cfg.beta1, t));
    const double vhat = v / (1 - std::pow(cfg.beta2, t));
    theta -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
  CHECK(net.w1(0, 0) == doctest::Approx(theta).epsilon(1e-12));
}

TEST_CASE("mlp_train: recovers a linear map, final loss under 1% of initial") {
  const Index es = 4;
  const Index et = 4;
  const Index n = 400;
  const Matrix a = random_matrix(es, et, rng::derive(31, "train-A"));
  const Matrix x = random_matrix(n, es, rng::derive(31, "train-x"));
  const Matrix y = x * a;
  MlpTrainConfig cfg;
  cfg.seed = 31;
  cfg.epochs = 300;  // small desk-scale problem; defaults are for real corpora
  cfg.learning_rate = 3e-3;
  const MlpNet init = make_mlp(es, et, cfg.seed);
  const double initial_loss = mlp_loss(init, x, y);
  const MlpNet net = mlp_train(x, y, cfg);
  const double final_loss = mlp_loss(net, x, y);
  CHECK(final_loss < 0.01 * initial_loss);
}

TEST_CASE("mlp_train: epochs = 0 violates the precondition") {
  MlpTrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(mlp_train(Matrix::Zero(4, 2), Matrix::Zero(4, 2), cfg), UsageError);
}

TEST_CASE("mlp_train: same seed gives bit-identical nets; different seed differs") {
  const Matrix x = random_matrix(60, 3, rng::derive(41, "det-x"));
  const Matrix y = random_matrix(60, 2, rng::derive(41, "det-y"));
  MlpTrainConfig cfg;
  cfg.seed = 77;
  cfg.epochs = 3;
  const MlpNet a = mlp_train(x, y, cfg);
  const MlpNet b = mlp_train(x, y, cfg);
  CHECK((a.w1.array() == b.w1.array()).all());
  CHECK((a.b1.array() == b.b1.array()).all());
  CHECK((a.w2.array() == b.w2.array()).all());
  CHECK((a.b2.array() == b.b2.array()).all());
  cfg.seed = 78;
  const MlpNet c = mlp_train(x, y, cfg);
  CHECK(max_abs(a.w1 - c.w1) > 0.0);
}

TEST_CASE("full-batch descent on a linear-region instance decreases loss every step") {
  MlpNet net = make_mlp(2, 2, 51);
  net.b1.array() += 5.0;  // keep all ReLUs active
  const Matrix x = random_matrix(20, 2, rng::derive(51, "desc-x"), 0.1);
  const Matrix y = random_matrix(20, 2, rng::derive(51, "desc-y"), 0.1);
  double prev = mlp_loss(net, x, y);
  const double lr = 1e-3;  // below the curvature limit, so descent is monotone
  for (int step = 0; step < 25; ++step) {
    MlpGrads grads;
    mlp_loss_and_grads(net, x, y, grads);
    net.w1 -= lr * grads.w1;
    net.b1 -= lr * grads.b1;
    net.w2 -= lr * grads.w2;
    net.b2 -= lr * grads.b2;
    const double cur = mlp_loss(net, x, y);
    CHECK(cur < prev);
    prev = cur;
  }
}
