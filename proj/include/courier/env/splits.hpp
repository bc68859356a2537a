// Copyright 2026 The Courier Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "courier/env/env.hpp"

namespace courier::env {

// Generalization splits. Novelty is defined by fixed per-kind reservations so
// that it is decidable without reference to a particular training run:
//  - each kind has one role and one movement that never occur in train;
//  - a fixed fifth of the kind triples is reserved for unseen-combination
//    evaluation and never occurs in train.
// "test" parses as the fully novel split.
enum class Split { train, dev, new_combo, new_attr, new_all };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

int forbidden_role_index(int kind);   // never assigned to `kind` in train
int forbidden_move_index(int kind);   // never assigned to `kind` in train

// Kind triples (sorted ascending). A triple is usable at all only if a role
// bijection avoiding every member's forbidden role exists.
bool kind_set_valid(const std::array<int, 3>& kinds);
bool kind_set_reserved(const std::array<int, 3>& kinds);
const std::vector<std::array<int, 3>>& valid_kind_sets();

int default_horizon(Stage stage);

std::vector<GameConfig> generate_split(Stage stage, Split split, int count,
                                       std::uint64_t seed);

struct SplitManifest {
  int version = 1;
  Stage stage = Stage::S1;
  Split split = Split::train;
  std::uint64_t seed = 0;
  std::uint64_t vocab = 0;
  std::vector<GameConfig> configs;
};

void write_split_manifest(const std::string& path, const SplitManifest& m);
SplitManifest read_split_manifest(const std::string& path);

// Machine-checkable split soundness. Returns an empty string when every
// config satisfies its split's constraints, else the first violation. When a
// train manifest is supplied, unseen-ness (and, for unseen-combination splits,
// per-entity seen-ness) is additionally checked against its actual contents.
std::string check_split(const SplitManifest& m,
                        const SplitManifest* train_manifest = nullptr);

}  // namespace courier::env
