// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

#include "prcy/nn.hpp"
#include "prcy/prompt.hpp"
#include "prcy/types.hpp"
#include "prcy/vocab.hpp"

namespace prcy::recycle {

// Recyclers map prompts from a source embedding space (width E_s) to a target
// space (width E_t), each fitted on paired vocabulary rows (v_s, v_t).
// Prompts are rows, so every mapping is applied by right-multiplication.

enum class Kind { v2v_lin, v2v_nn, lin_comb };

std::string to_string(Kind kind);
Kind parse_kind(std::string_view name);  // UsageError on unknown names

struct FittedRecycler {
  Kind kind = Kind::v2v_lin;
  std::string source_id;
  std::string target_id;
  Index source_dim = 0;
  Index target_dim = 0;

  // v2v-lin: y is E_s x E_t (or (E_s + 1) x E_t when affine, with the bias
  // row last; inputs are augmented with a trailing 1).
  Matrix y;
  bool affine = false;

  // v2v-nn.
  nn::MlpNet net;

  // lin-comb: prompt * vs_pinv gives combination coefficients over the n
  // vocabulary rows; coefficients * vt_rows re-mixes them in target space.
  Matrix vs_pinv;  // E_s x n, pinv of the n x E_s source rows
  Matrix vt_rows;  // n x E_t
};

// Least-squares linear map: y = argmin |v_s y - v_t|_F (minimum-norm).  With
// affine = true a constant-1 column is appended to v_s first.
FittedRecycler fit_v2v_lin(const Matrix& v_s, const Matrix& v_t, bool affine = false);

// MLP map trained with nn::mlp_train on (v_s, v_t) pairs.
FittedRecycler fit_v2v_nn(const Matrix& v_s, const Matrix& v_t,
                          const nn::MlpTrainConfig& cfg);

// Linear-combination transfer: each prompt row is expressed as coefficients
// over the source vocabulary rows (via pinv), and those coefficients are
// re-mixed over the target rows.
FittedRecycler fit_lin_comb(const Matrix& v_s, const Matrix& v_t);

// Applies a fitted recycler to a prompt, producing a prompt in the target
// space.  Checks the prompt width against source_dim and, unless
// allow_model_mismatch, the prompt's model id against source_id.
Prompt apply_recycler(const FittedRecycler& r, const Prompt& p,
                      bool allow_model_mismatch = false);

// Convenience end-to-end path: build paired training rows from two embedding
// tables with one vocab spec, fit the requested kind, and apply.
Prompt recycle_prompt(const vocab::EmbeddingTable& source,
                      const vocab::EmbeddingTable& target,
                      const vocab::VocabSubsetSpec& spec, Kind kind, const Prompt& p,
                      const nn::MlpTrainConfig& nn_cfg = {});

}  // namespace prcy::recycle
