// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#include "prcy/vocab.hpp"

#include <numeric>
#include <string>

namespace prcy::vocab {

std::vector<std::size_t> select_training_rows(const EmbeddingTable& table,
                                              const VocabSubsetSpec& spec) {
  if (spec.take == 0) throw UsageError("vocab: take must be >= 1");

  const auto n = static_cast<std::size_t>(table.vocab_size());
  std::vector<std::size_t> survivors;
  if (spec.allowlist) {
    survivors = *spec.allowlist;  // already sorted and deduplicated on load
    for (std::size_t id : survivors) {
      if (id >= n) {
        throw DataError("vocab: allowlist index " + std::to_string(id) +
                        " out of range for vocabulary of " + std::to_string(n));
      }
    }
  } else {
    survivors.resize(n);
    std::iota(survivors.begin(), survivors.end(), std::size_t{0});
  }

  if (survivors.size() < spec.skip + spec.take) {
    throw DataError("vocab: insufficient vocabulary: need skip + take = " +
                    std::to_string(spec.skip + spec.take) + " rows, have " +
                    std::to_string(survivors.size()));
  }
  return {survivors.begin() + static_cast<std::ptrdiff_t>(spec.skip),
          survivors.begin() + static_cast<std::ptrdiff_t>(spec.skip + spec.take)};
}

Matrix gather_rows(const EmbeddingTable& table, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Index>(rows.size()), table.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(table.vocab_size())) {
      throw DataError("vocab: row index " + std::to_string(rows[i]) + " out of range");
    }
    out.row(static_cast<Index>(i)) = table.embeddings.row(static_cast<Index>(rows[i]));
  }
  return out;
}

std::pair<Matrix, Matrix> paired_training_matrices(const EmbeddingTable& source,
                                                   const EmbeddingTable& target,
                                                   const VocabSubsetSpec& spec) {
  if (source.vocab_size() != target.vocab_size()) {
    throw DataError("vocab: vocabulary sizes differ: source has " +
                    std::to_string(source.vocab_size()) + ", target has " +
                    std::to_string(target.vocab_size()));
  }
  const auto rows = select_training_rows(source, spec);
  return {gather_rows(source, rows), gather_rows(target, rows)};
}

}  // namespace prcy::vocab
