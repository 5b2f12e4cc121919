// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "prcy/types.hpp"

namespace prcy {

// A soft prompt: L rows in some model's embedding space, plus provenance
// metadata carried through tuning, recycling, and persistence.  L == 0 is the
// zero-shot sentinel.
struct Prompt {
  Matrix rows;  // L x E
  std::string model_id;
  std::string init_strategy;
  std::uint64_t train_step = 0;
  std::string task_tag;

  Index length() const { return rows.rows(); }
  Index dim() const { return rows.cols(); }
};

inline Prompt zero_shot_prompt(Index dim, std::string model_id = "",
                               std::string task_tag = "") {
  Prompt p;
  p.rows = Matrix(0, dim);
  p.model_id = std::move(model_id);
  p.init_strategy = "zero-shot";
  p.task_tag = std::move(task_tag);
  return p;
}

}  // namespace prcy
