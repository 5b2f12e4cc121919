// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "prcy/nn.hpp"
#include "prcy/prompt.hpp"
#include "prcy/recycle.hpp"
#include "prcy/toymodel.hpp"
#include "prcy/types.hpp"

namespace prcy::store {

// Typed persistence for every artifact kind.  Matrices go through matio
// (bit-exact f64); metadata lives in a small JSON sidecar next to them.  A
// "prefix" names the artifact: prefix.json plus prefix.<part>.prcy files.

void save_model(const std::filesystem::path& prefix, const toy::ToyModel& m);
toy::ToyModel load_model(const std::filesystem::path& prefix);

void save_prompt(const std::filesystem::path& prefix, const Prompt& p);
Prompt load_prompt(const std::filesystem::path& prefix);

void save_task(const std::filesystem::path& path, const toy::SyntheticTask& task);
toy::SyntheticTask load_task(const std::filesystem::path& path);

void save_mlp(const std::filesystem::path& prefix, const nn::MlpNet& net);
nn::MlpNet load_mlp(const std::filesystem::path& prefix);

void save_recycler(const std::filesystem::path& prefix, const recycle::FittedRecycler& r);
recycle::FittedRecycler load_recycler(const std::filesystem::path& prefix);

}  // namespace prcy::store
