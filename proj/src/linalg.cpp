// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#include "prcy/linalg.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "prcy/rng.hpp"

namespace prcy::linalg {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DataError("matmul: inner dimensions differ: (" + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + ") * (" + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()) + ")");
  }
  Matrix c(a.rows(), b.cols());
  c.noalias() = a * b;
  return c;
}

double frobenius_norm(const Matrix& a) { return a.norm(); }

namespace {

// Shared SVD solve: x = V diag(s+) U^T b with the documented rcond cutoff.
Matrix svd_solve(const Matrix& a, const Matrix& b) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw NumericError("least_squares_min_norm: SVD did not converge");
  }
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  if (smax == 0.0) {
    return Matrix::Zero(a.cols(), b.cols());  // pinv of the zero matrix is zero
  }
  const double cutoff = static_cast<double>(std::max(a.rows(), a.cols())) *
                        std::numeric_limits<double>::epsilon() * smax;

  Matrix t = svd.matrixU().transpose() * b;  // r x n
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) {
      t.row(i) /= sv(i);
    } else {
      t.row(i).setZero();
    }
  }
  return svd.matrixV() * t;
}

}  // namespace

Matrix least_squares_min_norm(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DataError("least_squares_min_norm: row counts differ: a has " +
                    std::to_string(a.rows()) + ", b has " + std::to_string(b.rows()));
  }
  return svd_solve(a, b);
}

Matrix pseudoinverse(const Matrix& a) {
  Matrix eye = Matrix::Identity(a.rows(), a.rows());
  return svd_solve(a, eye);
}

Matrix random_orthogonal(Index e, std::uint64_t seed) {
  if (e < 1) throw UsageError("random_orthogonal: dimension must be >= 1");
  rng::Counter c(rng::derive(seed, "orthogonal-fill"));
  Matrix g(e, e);
  for (Index i = 0; i < e; ++i) {
    for (Index j = 0; j < e; ++j) {
      g(i, j) = c.gaussian(static_cast<std::uint64_t>(i * e + j));
    }
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  // Fix the gauge: make the implicit R diagonal positive so Q is unique.
  const Matrix& packed = qr.matrixQR();
  for (Index j = 0; j < e; ++j) {
    if (packed(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

Matrix random_signed_permutation(Index e, std::uint64_t seed) {
  if (e < 1) throw UsageError("random_signed_permutation: dimension must be >= 1");
  rng::Stream s(rng::derive(seed, "signed-perm"));
  std::vector<Index> perm(static_cast<std::size_t>(e));
  for (Index i = 0; i < e; ++i) perm[static_cast<std::size_t>(i)] = i;
  s.shuffle(perm);
  Matrix m = Matrix::Zero(e, e);
  for (Index i = 0; i < e; ++i) {
    const double sign = (s.next() & 1ull) ? 1.0 : -1.0;
    m(i, perm[static_cast<std::size_t>(i)]) = sign;
  }
  return m;
}

}  // namespace prcy::linalg
