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
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "courier/common.hpp"

namespace courier::env {

// ---- Vocabulary -------------------------------------------------------------

struct EntityKind {
  int id;                                // symbol index, 0..11
  std::string canonical_name;
  std::vector<std::string> synonyms;     // includes canonical_name
};

// The fixed 12-kind vocabulary plus phrase banks; versioned so that split
// manifests and text golden files stay reproducible.
const std::vector<EntityKind>& entity_kinds();
int vocab_version();
std::uint64_t vocab_fingerprint();       // hash of every token bank

enum class Role { messenger, goal, enemy };
enum class Movement { chasing, fleeing, stationary };
enum class Action { up, down, right, left, stay };
inline constexpr int kNumActions = 5;
inline constexpr int kNumKinds = 12;

std::string to_string(Role r);
std::string to_string(Movement m);
std::string to_string(Action a);
Role role_from_string(const std::string& s);
Movement movement_from_string(const std::string& s);

enum class Stage { S1, S2, S2dev, S3, WM };
std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

// ---- Game configuration -----------------------------------------------------

struct EntityAssignment {
  int kind = 0;
  Role role = Role::messenger;
  Movement movement = Movement::stationary;
};

struct Manual {
  std::vector<std::vector<std::string>> sentences;  // token sequences
  // Hidden sentence -> entity-instance map, -1 for the extraneous sentence.
  // Diagnostics only; never shown to the learner.
  std::vector<int> alignment;
};

struct GameConfig {
  Stage stage = Stage::S1;
  // Principal entities first (messenger/goal/enemy exactly once among them);
  // S3 appends two same-name duplicates with role enemy.
  std::vector<EntityAssignment> assignments;
  std::optional<EntityAssignment> distractor;  // S3 only; never on the grid
  Manual manual;
  int horizon = 4;
  std::uint64_t seed = 0;
  int grid_h = 10;
  int grid_w = 10;
};

// Number of principal entities (excluding S3 duplicates).
int principal_count(const GameConfig& cfg);
void validate_config(const GameConfig& cfg);  // throws ConfigError

// ---- Live state ---------------------------------------------------------------

struct Pos {
  int y = 0;
  int x = 0;
  friend bool operator==(const Pos&, const Pos&) = default;
};
inline int manhattan(Pos a, Pos b) {
  return std::abs(a.y - b.y) + std::abs(a.x - b.x);
}

struct EntityState {
  EntityAssignment a;
  Pos pos;
  bool alive = true;
};

struct GameState {
  GameConfig cfg;
  std::vector<EntityState> entities;
  Pos agent;
  bool agent_alive = true;
  bool has_message = false;
  int t = 0;
  bool terminated = false;
  bool won = false;
  double ret = 0.0;            // accumulated return
  std::uint64_t stream = 0;    // per-episode randomness root
};

// Symbol-level observation: entity cells carry kind+1, the agent carries one
// of two symbols depending on has_message, empty cells 0. Per-track entries
// expose positions of the same instances across steps without names or roles.
inline constexpr int kAgentSymbolNoMsg = kNumKinds + 1;   // 13
inline constexpr int kAgentSymbolMsg = kNumKinds + 2;     // 14

struct TrackObs {
  int track = 0;     // stable instance slot within the episode
  int symbol = 0;    // kind + 1
  Pos pos;
  bool alive = true;
};

struct Observation {
  std::vector<int> grid_symbols;  // grid_h * grid_w, row-major
  std::vector<TrackObs> tracks;
  Pos agent;
  bool agent_alive = true;
  bool has_message = false;
  int t = 0;
  int grid_h = 10, grid_w = 10;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

// ---- Core operations ------------------------------------------------------------

GameState new_game(const GameConfig& cfg, std::uint64_t seed);
StepResult step(GameState& state, Action action);
Observation observe(const GameState& state);

Manual generate_manual(const std::vector<EntityAssignment>& assignments,
                       const std::optional<EntityAssignment>& distractor,
                       Rng& rng);

// Win flag: message delivered to the goal (return 1.5) for the multi-phase
// stages; the first stage ends at its single objective (message retrieval, or
// delivery when the game starts with the message) and wins there.
inline bool won(const GameState& s) { return s.won; }

// Greedy shortest-path policy with full label access (enemy cells are walls);
// used only as an evaluation oracle in tests.
Action scripted_oracle_action(const GameState& state);

}  // namespace courier::env
