// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "prcy/types.hpp"

namespace prcy::linalg {

// Dense building blocks on top of Eigen.  Conventions: vectors passed around
// as matrices are rows, and all solvers use SVD so rank-deficient systems get
// the minimum-norm answer instead of garbage.

// a (m x k) times b (k x n); throws DataError on an inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& a);

// Minimum-norm least squares: returns the x (k x n) minimising |a x - b|_F,
// and among minimisers the one of least Frobenius norm.  Singular values
// below rcond * sigma_max are treated as zero, rcond = max(m, k) * eps.
Matrix least_squares_min_norm(const Matrix& a, const Matrix& b);

// Moore-Penrose pseudoinverse via the same SVD path and cutoff.
Matrix pseudoinverse(const Matrix& a);

// Haar-ish random orthogonal matrix: Gaussian fill, thin QR, then the R
// diagonal's signs folded into Q so the result is unique per seed.
Matrix random_orthogonal(Index e, std::uint64_t seed);

// Random signed permutation: exactly one entry of +-1 per row and column.
Matrix random_signed_permutation(Index e, std::uint64_t seed);

}  // namespace prcy::linalg
