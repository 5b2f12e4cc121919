// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#include "prcy/store.hpp"

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "prcy/matio.hpp"

namespace prcy::store {

using nlohmann::json;

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& prefix,
                                  const std::string& suffix) {
  std::filesystem::path p = prefix;
  p += suffix;
  return p;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("store: cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("store: " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("store: cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw DataError("store: write failed: " + path.string());
}

template <typename T>
T meta_field(const json& j, const std::filesystem::path& path, const char* key) {
  if (!j.contains(key)) {
    throw DataError("store: " + path.string() + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError("store: " + path.string() + ": field '" + key + "' has the wrong type");
  }
}

void expect_kind(const json& j, const std::filesystem::path& path, const char* kind) {
  const auto got = meta_field<std::string>(j, path, "kind");
  if (got != kind) {
    throw DataError("store: " + path.string() + ": expected a " + kind +
                    " sidecar, found '" + got + "'");
  }
}

}  // namespace

void save_model(const std::filesystem::path& prefix, const toy::ToyModel& m) {
  matio::save_matrix(with_suffix(prefix, ".table.prcy"), m.table.embeddings);
  matio::save_matrix(with_suffix(prefix, ".w.prcy"), m.w);
  json meta{{"kind", "model"},
            {"id", m.id},
            {"nonlinearity", toy::to_string(m.g)},
            {"vocab", m.vocab_size()},
            {"dim", m.dim()}};
  write_json(with_suffix(prefix, ".json"), meta);
}

toy::ToyModel load_model(const std::filesystem::path& prefix) {
  const auto meta_path = with_suffix(prefix, ".json");
  const json meta = read_json(meta_path);
  expect_kind(meta, meta_path, "model");

  toy::ToyModel m;
  m.id = meta_field<std::string>(meta, meta_path, "id");
  m.g = toy::parse_nonlinearity(meta_field<std::string>(meta, meta_path, "nonlinearity"));
  m.table.model_id = m.id;
  m.table.embeddings = matio::load_matrix(with_suffix(prefix, ".table.prcy"));
  m.w = matio::load_matrix(with_suffix(prefix, ".w.prcy"));

  if (m.table.vocab_size() != meta_field<Index>(meta, meta_path, "vocab") ||
      m.table.dim() != meta_field<Index>(meta, meta_path, "dim")) {
    throw DataError("store: " + prefix.string() + ": table shape does not match sidecar");
  }
  if (m.w.rows() != m.dim() || m.w.cols() != m.dim()) {
    throw DataError("store: " + prefix.string() + ": interaction matrix is not dim x dim");
  }
  return m;
}

void save_prompt(const std::filesystem::path& prefix, const Prompt& p) {
  matio::save_matrix(with_suffix(prefix, ".prcy"), p.rows);
  json meta{{"kind", "prompt"},
            {"model_id", p.model_id},
            {"init_strategy", p.init_strategy},
            {"train_step", p.train_step},
            {"task_tag", p.task_tag}};
  write_json(with_suffix(prefix, ".json"), meta);
}

Prompt load_prompt(const std::filesystem::path& prefix) {
  const auto meta_path = with_suffix(prefix, ".json");
  const json meta = read_json(meta_path);
  expect_kind(meta, meta_path, "prompt");

  Prompt p;
  p.rows = matio::load_matrix(with_suffix(prefix, ".prcy"));
  p.model_id = meta_field<std::string>(meta, meta_path, "model_id");
  p.init_strategy = meta_field<std::string>(meta, meta_path, "init_strategy");
  p.train_step = meta_field<std::uint64_t>(meta, meta_path, "train_step");
  p.task_tag = meta_field<std::string>(meta, meta_path, "task_tag");
  return p;
}

void save_task(const std::filesystem::path& path, const toy::SyntheticTask& task) {
  json examples = json::object();
  for (const char* split : {"train", "eval"}) {
    json arr = json::array();
    const auto& src = split == std::string("train") ? task.train : task.eval;
    for (const auto& ex : src) {
      arr.push_back(json{{"tokens", ex.tokens}, {"label", ex.label}});
    }
    examples[split] = std::move(arr);
  }
  json j{{"kind", "task"},
         {"id", task.id},
         {"classes", task.classes},
         {"verbalizers", task.verbalizers},
         {"examples", std::move(examples)}};
  write_json(path, j);
}

toy::SyntheticTask load_task(const std::filesystem::path& path) {
  const json j = read_json(path);
  expect_kind(j, path, "task");

  toy::SyntheticTask task;
  task.id = meta_field<std::string>(j, path, "id");
  task.classes = meta_field<int>(j, path, "classes");
  task.verbalizers = meta_field<std::vector<std::vector<std::size_t>>>(j, path, "verbalizers");

  const json examples = meta_field<json>(j, path, "examples");
  for (const char* split : {"train", "eval"}) {
    if (!examples.contains(split)) {
      throw DataError("store: " + path.string() + ": missing examples." + split);
    }
    auto& dst = split == std::string("train") ? task.train : task.eval;
    for (const auto& ex : examples.at(split)) {
      toy::TaskExample out;
      out.tokens = meta_field<std::vector<std::size_t>>(ex, path, "tokens");
      out.label = meta_field<int>(ex, path, "label");
      dst.push_back(std::move(out));
    }
  }
  if (task.verbalizers.size() != static_cast<std::size_t>(task.classes)) {
    throw DataError("store: " + path.string() + ": verbalizer count does not match classes");
  }
  return task;
}

void save_mlp(const std::filesystem::path& prefix, const nn::MlpNet& net) {
  matio::save_matrix(with_suffix(prefix, ".w1.prcy"), net.w1);
  matio::save_matrix(with_suffix(prefix, ".b1.prcy"), Matrix(net.b1.transpose()));
  matio::save_matrix(with_suffix(prefix, ".w2.prcy"), net.w2);
  matio::save_matrix(with_suffix(prefix, ".b2.prcy"), Matrix(net.b2.transpose()));
  json meta{{"kind", "mlp"},
            {"in", net.in_dim()},
            {"hidden", net.hidden_dim()},
            {"out", net.out_dim()}};
  write_json(with_suffix(prefix, ".json"), meta);
}

nn::MlpNet load_mlp(const std::filesystem::path& prefix) {
  const auto meta_path = with_suffix(prefix, ".json");
  const json meta = read_json(meta_path);
  expect_kind(meta, meta_path, "mlp");

  nn::MlpNet net;
  net.w1 = matio::load_matrix(with_suffix(prefix, ".w1.prcy"));
  net.w2 = matio::load_matrix(with_suffix(prefix, ".w2.prcy"));
  const Matrix b1 = matio::load_matrix(with_suffix(prefix, ".b1.prcy"));
  const Matrix b2 = matio::load_matrix(with_suffix(prefix, ".b2.prcy"));
  if (b1.rows() != 1 || b2.rows() != 1) {
    throw DataError("store: " + prefix.string() + ": bias files must be single-row");
  }
  net.b1 = b1.row(0).transpose();
  net.b2 = b2.row(0).transpose();

  if (net.in_dim() != meta_field<Index>(meta, meta_path, "in") ||
      net.hidden_dim() != meta_field<Index>(meta, meta_path, "hidden") ||
      net.out_dim() != meta_field<Index>(meta, meta_path, "out") ||
      net.w1.cols() != net.w2.rows() || net.b1.size() != net.hidden_dim() ||
      net.b2.size() != net.out_dim()) {
    throw DataError("store: " + prefix.string() + ": net shapes are inconsistent");
  }
  return net;
}

void save_recycler(const std::filesystem::path& prefix, const recycle::FittedRecycler& r) {
  json meta{{"kind", "recycler"},
            {"recycler", recycle::to_string(r.kind)},
            {"source_id", r.source_id},
            {"target_id", r.target_id},
            {"source_dim", r.source_dim},
            {"target_dim", r.target_dim},
            {"affine", r.affine}};
  switch (r.kind) {
    case recycle::Kind::v2v_lin:
      matio::save_matrix(with_suffix(prefix, ".y.prcy"), r.y);
      break;
    case recycle::Kind::v2v_nn:
      save_mlp(with_suffix(prefix, ".net"), r.net);
      break;
    case recycle::Kind::lin_comb:
      matio::save_matrix(with_suffix(prefix, ".vs_pinv.prcy"), r.vs_pinv);
      matio::save_matrix(with_suffix(prefix, ".vt_rows.prcy"), r.vt_rows);
      break;
  }
  write_json(with_suffix(prefix, ".json"), meta);
}

recycle::FittedRecycler load_recycler(const std::filesystem::path& prefix) {
  const auto meta_path = with_suffix(prefix, ".json");
  const json meta = read_json(meta_path);
  expect_kind(meta, meta_path, "recycler");

  recycle::FittedRecycler r;
  r.kind = recycle::parse_kind(meta_field<std::string>(meta, meta_path, "recycler"));
  r.source_id = meta_field<std::string>(meta, meta_path, "source_id");
  r.target_id = meta_field<std::string>(meta, meta_path, "target_id");
  r.source_dim = meta_field<Index>(meta, meta_path, "source_dim");
  r.target_dim = meta_field<Index>(meta, meta_path, "target_dim");
  r.affine = meta_field<bool>(meta, meta_path, "affine");

  switch (r.kind) {
    case recycle::Kind::v2v_lin: {
      r.y = matio::load_matrix(with_suffix(prefix, ".y.prcy"));
      const Index expect_rows = r.source_dim + (r.affine ? 1 : 0);
      if (r.y.rows() != expect_rows || r.y.cols() != r.target_dim) {
        throw DataError("store: " + prefix.string() + ": map shape does not match sidecar");
      }
      break;
    }
    case recycle::Kind::v2v_nn:
      r.net = load_mlp(with_suffix(prefix, ".net"));
      if (r.net.in_dim() != r.source_dim || r.net.out_dim() != r.target_dim) {
        throw DataError("store: " + prefix.string() + ": net dims do not match sidecar");
      }
      break;
    case recycle::Kind::lin_comb:
      r.vs_pinv = matio::load_matrix(with_suffix(prefix, ".vs_pinv.prcy"));
      r.vt_rows = matio::load_matrix(with_suffix(prefix, ".vt_rows.prcy"));
      if (r.vs_pinv.rows() != r.source_dim || r.vt_rows.cols() != r.target_dim ||
          r.vs_pinv.cols() != r.vt_rows.rows()) {
        throw DataError("store: " + prefix.string() + ": lin-comb shapes are inconsistent");
      }
      break;
  }
  return r;
}

}  // namespace prcy::store
