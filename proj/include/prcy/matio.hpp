// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "prcy/types.hpp"

namespace prcy::matio {

// Binary matrix container.  Header, little-endian throughout:
//   bytes 0..3   magic "PRCY"
//   bytes 4..7   u32 format version (currently 1)
//   byte  8      u8 dtype: 0 = f32, 1 = f64
//   bytes 9..16  u64 rows
//   bytes 17..24 u64 cols
// followed by rows*cols scalars, row-major.  f64 round-trips bit-exactly.

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

inline constexpr std::uint32_t kFormatVersion = 1;

struct MatrixInfo {
  Dtype dtype;
  std::uint64_t rows;
  std::uint64_t cols;
};

void save_matrix(const std::filesystem::path& path, const Matrix& m,
                 Dtype dtype = Dtype::f64);
Matrix load_matrix(const std::filesystem::path& path);

// Reads just the header; used by tests and the CLI to describe artifacts.
MatrixInfo matrix_info(const std::filesystem::path& path);

// Token allowlist: plain text, one non-negative integer per line.  Blank
// lines and lines starting with '#' are skipped.  Loading sorts ascending
// and drops duplicates.
using TokenAllowlist = std::vector<std::size_t>;

TokenAllowlist load_allowlist(const std::filesystem::path& path);
void save_allowlist(const std::filesystem::path& path, const TokenAllowlist& ids);

}  // namespace prcy::matio
