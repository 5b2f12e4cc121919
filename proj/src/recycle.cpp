// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#include "prcy/recycle.hpp"

#include <string>

#include "prcy/linalg.hpp"

namespace prcy::recycle {

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::v2v_lin: return "v2v-lin";
    case Kind::v2v_nn: return "v2v-nn";
    case Kind::lin_comb: return "lin-comb";
  }
  throw UsageError("to_string: bad recycler kind");
}

Kind parse_kind(std::string_view name) {
  if (name == "v2v-lin") return Kind::v2v_lin;
  if (name == "v2v-nn") return Kind::v2v_nn;
  if (name == "lin-comb") return Kind::lin_comb;
  throw UsageError("unknown recycler kind '" + std::string(name) +
                   "' (expected v2v-lin, v2v-nn, or lin-comb)");
}

namespace {

void check_pairs(const Matrix& v_s, const Matrix& v_t, const char* who) {
  if (v_s.rows() != v_t.rows()) {
    throw DataError(std::string(who) + ": paired row counts differ: source has " +
                    std::to_string(v_s.rows()) + ", target has " +
                    std::to_string(v_t.rows()));
  }
  if (v_s.rows() == 0) throw DataError(std::string(who) + ": no training rows");
}

}  // namespace

FittedRecycler fit_v2v_lin(const Matrix& v_s, const Matrix& v_t, bool affine) {
  check_pairs(v_s, v_t, "fit_v2v_lin");
  FittedRecycler r;
  r.kind = Kind::v2v_lin;
  r.affine = affine;
  r.source_dim = v_s.cols();
  r.target_dim = v_t.cols();
  if (affine) {
    Matrix aug(v_s.rows(), v_s.cols() + 1);
    aug.leftCols(v_s.cols()) = v_s;
    aug.col(v_s.cols()).setOnes();
    r.y = linalg::least_squares_min_norm(aug, v_t);
  } else {
    r.y = linalg::least_squares_min_norm(v_s, v_t);
  }
  return r;
}

FittedRecycler fit_v2v_nn(const Matrix& v_s, const Matrix& v_t,
                          const nn::MlpTrainConfig& cfg) {
  check_pairs(v_s, v_t, "fit_v2v_nn");
  FittedRecycler r;
  r.kind = Kind::v2v_nn;
  r.source_dim = v_s.cols();
  r.target_dim = v_t.cols();
  r.net = nn::mlp_train(v_s, v_t, cfg);
  return r;
}

FittedRecycler fit_lin_comb(const Matrix& v_s, const Matrix& v_t) {
  check_pairs(v_s, v_t, "fit_lin_comb");
  FittedRecycler r;
  r.kind = Kind::lin_comb;
  r.source_dim = v_s.cols();
  r.target_dim = v_t.cols();
  r.vs_pinv = linalg::pseudoinverse(v_s);
  r.vt_rows = v_t;
  return r;
}

Prompt apply_recycler(const FittedRecycler& r, const Prompt& p,
                      bool allow_model_mismatch) {
  if (p.dim() != r.source_dim) {
    throw DataError("apply_recycler: prompt width " + std::to_string(p.dim()) +
                    " does not match recycler source dim " +
                    std::to_string(r.source_dim));
  }
  if (!allow_model_mismatch && !r.source_id.empty() && !p.model_id.empty() &&
      p.model_id != r.source_id) {
    throw DataError("apply_recycler: prompt came from model '" + p.model_id +
                    "' but recycler was fitted from '" + r.source_id +
                    "' (pass the mismatch override to proceed)");
  }

  Prompt out;
  switch (r.kind) {
    case Kind::v2v_lin:
      if (r.affine) {
        Matrix aug(p.rows.rows(), p.rows.cols() + 1);
        aug.leftCols(p.rows.cols()) = p.rows;
        aug.col(p.rows.cols()).setOnes();
        out.rows = linalg::matmul(aug, r.y);
      } else {
        out.rows = linalg::matmul(p.rows, r.y);
      }
      break;
    case Kind::v2v_nn:
      if (p.length() == 0) {
        out.rows = Matrix(0, r.target_dim);
      } else {
        out.rows = nn::mlp_forward(r.net, p.rows);
      }
      break;
    case Kind::lin_comb:
      out.rows = linalg::matmul(linalg::matmul(p.rows, r.vs_pinv), r.vt_rows);
      break;
  }
  out.model_id = r.target_id;
  out.init_strategy = p.init_strategy;
  out.train_step = p.train_step;
  out.task_tag = p.task_tag;
  return out;
}

Prompt recycle_prompt(const vocab::EmbeddingTable& source,
                      const vocab::EmbeddingTable& target,
                      const vocab::VocabSubsetSpec& spec, Kind kind, const Prompt& p,
                      const nn::MlpTrainConfig& nn_cfg) {
  auto [v_s, v_t] = vocab::paired_training_matrices(source, target, spec);
  FittedRecycler r;
  switch (kind) {
    case Kind::v2v_lin: r = fit_v2v_lin(v_s, v_t); break;
    case Kind::v2v_nn: r = fit_v2v_nn(v_s, v_t, nn_cfg); break;
    case Kind::lin_comb: r = fit_lin_comb(v_s, v_t); break;
  }
  r.source_id = source.model_id;
  r.target_id = target.model_id;
  return apply_recycler(r, p);
}

}  // namespace prcy::recycle
