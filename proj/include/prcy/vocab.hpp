// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prcy/matio.hpp"
#include "prcy/types.hpp"

namespace prcy::vocab {

// An embedding table with rows ordered by descending token frequency, so that
// "skip the head, take the next chunk" selects mid-frequency tokens.
struct EmbeddingTable {
  std::string model_id;
  Matrix embeddings;  // N x E

  Index vocab_size() const { return embeddings.rows(); }
  Index dim() const { return embeddings.cols(); }
};

// Row-selection recipe for recycler training pairs.  With an allowlist the
// skip/take window applies to the allowlisted rows in ascending index order;
// without one it applies to the full table.
struct VocabSubsetSpec {
  std::optional<matio::TokenAllowlist> allowlist;
  std::size_t skip = 1000;
  std::size_t take = 4000;
};

// Resolves the spec to concrete row indices, ascending.  Throws DataError if
// fewer than skip + take rows survive, or if an allowlist index is out of
// range; throws UsageError if take == 0.
std::vector<std::size_t> select_training_rows(const EmbeddingTable& table,
                                              const VocabSubsetSpec& spec);

Matrix gather_rows(const EmbeddingTable& table, std::span<const std::size_t> rows);

// Applies one spec to two aligned vocabularies and returns (source, target)
// training matrices with matching row order.
std::pair<Matrix, Matrix> paired_training_matrices(const EmbeddingTable& source,
                                                   const EmbeddingTable& target,
                                                   const VocabSubsetSpec& spec);

}  // namespace prcy::vocab
