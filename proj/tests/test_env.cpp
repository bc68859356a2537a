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

#include <set>
#include <vector>

#include "courier/env/env.hpp"
#include "doctest.h"
#include "reference_env.hpp"

namespace courier {
namespace {

using env::Action;
using env::GameConfig;
using env::GameState;
using env::Movement;
using env::Pos;
using env::Role;
using env::Stage;

GameConfig basic_config(Stage stage, Movement mv = Movement::stationary) {
  GameConfig cfg;
  cfg.stage = stage;
  cfg.assignments = {
      {0, Role::messenger, mv},
      {4, Role::goal, mv},
      {8, Role::enemy, mv},
  };
  cfg.horizon = stage == Stage::S1 ? 4 : 32;
  cfg.seed = 77;
  Rng mrng(5);
  cfg.manual = env::generate_manual(cfg.assignments, std::nullopt, mrng);
  return cfg;
}

// Places entities at fixed cells for hand-crafted transition checks.
GameState crafted_state(std::vector<env::EntityState> ents, Pos agent,
                        bool has_msg, int horizon, int grid = 10,
                        Stage stage = Stage::WM) {
  GameState s;
  s.cfg.stage = stage;
  s.cfg.horizon = horizon;
  s.cfg.grid_h = grid;
  s.cfg.grid_w = grid;
  s.cfg.seed = 3;
  for (const auto& e : ents) s.cfg.assignments.push_back(e.a);
  s.entities = std::move(ents);
  s.agent = agent;
  s.has_message = has_msg;
  s.stream = Rng(3).fork("episode", 0).state();
  return s;
}

TEST_SUITE_BEGIN("env");

TEST_CASE("vocabulary: twelve kinds, each with at least three names") {
  const auto& kinds = env::entity_kinds();
  REQUIRE(kinds.size() == 12);
  std::set<std::string> seen;
  for (const auto& k : kinds) {
    CHECK(k.synonyms.size() >= 3);
    for (const auto& s : k.synonyms) CHECK(seen.insert(s).second);
  }
  CHECK(env::vocab_fingerprint() != 0);
}

TEST_CASE("enum round trips") {
  for (auto r : {Role::messenger, Role::goal, Role::enemy})
    CHECK(env::role_from_string(env::to_string(r)) == r);
  for (auto m :
       {Movement::chasing, Movement::fleeing, Movement::stationary})
    CHECK(env::movement_from_string(env::to_string(m)) == m);
  for (auto st : {Stage::S1, Stage::S2, Stage::S2dev, Stage::S3, Stage::WM})
    CHECK(env::stage_from_string(env::to_string(st)) == st);
  CHECK_THROWS_AS(env::role_from_string("wizard"), ConfigError);
}

TEST_CASE("config validation rejects malformed games") {
  GameConfig ok = basic_config(Stage::S2, Movement::chasing);
  CHECK_NOTHROW(env::validate_config(ok));

  GameConfig two = ok;
  two.assignments.pop_back();
  CHECK_THROWS_AS(env::validate_config(two), ConfigError);

  GameConfig dup = ok;
  dup.assignments[1].role = Role::messenger;  // two messengers, no goal
  CHECK_THROWS_AS(env::validate_config(dup), ConfigError);

  GameConfig moving_s1 = basic_config(Stage::S1);
  moving_s1.assignments[0].movement = Movement::chasing;
  CHECK_THROWS_AS(env::validate_config(moving_s1), ConfigError);

  GameConfig bad_h = ok;
  bad_h.horizon = 0;
  CHECK_THROWS_AS(env::validate_config(bad_h), ConfigError);
}

TEST_CASE("first stage spawns on the distance-2 ring around the center") {
  GameConfig cfg = basic_config(Stage::S1);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    GameState s = env::new_game(cfg, seed);
    CHECK(s.agent.y == cfg.grid_h / 2);
    CHECK(s.agent.x == cfg.grid_w / 2);
    std::set<std::pair<int, int>> cells;
    for (const auto& e : s.entities) {
      CHECK(env::manhattan(e.pos, s.agent) == 2);
      CHECK(cells.insert({e.pos.y, e.pos.x}).second);  // distinct cells
    }
  }
}

TEST_CASE("first stage sometimes starts with the message in hand") {
  GameConfig cfg = basic_config(Stage::S1);
  int with = 0, total = 200;
  for (std::uint64_t seed = 0; seed < static_cast<std::uint64_t>(total);
       ++seed)
    with += env::new_game(cfg, seed).has_message ? 1 : 0;
  // Binomial(200, 0.5): allow a generous band.
  CHECK(with > 60);
  CHECK(with < 140);
}

TEST_CASE("later stages spawn on distinct uniform cells without a message") {
  GameConfig cfg = basic_config(Stage::S2, Movement::chasing);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    GameState s = env::new_game(cfg, seed);
    CHECK_FALSE(s.has_message);
    std::set<std::pair<int, int>> cells{{s.agent.y, s.agent.x}};
    for (const auto& e : s.entities)
      CHECK(cells.insert({e.pos.y, e.pos.x}).second);
  }
}

TEST_CASE("same seed reproduces the layout, different seeds vary it") {
  GameConfig cfg = basic_config(Stage::S2, Movement::chasing);
  GameState a = env::new_game(cfg, 11);
  GameState b = env::new_game(cfg, 11);
  CHECK(a.agent == b.agent);
  for (std::size_t i = 0; i < a.entities.size(); ++i)
    CHECK(a.entities[i].pos == b.entities[i].pos);

  bool any_diff = false;
  for (std::uint64_t s = 12; s < 17 && !any_diff; ++s) {
    GameState c = env::new_game(cfg, s);
    any_diff = !(c.agent == a.agent);
    for (std::size_t i = 0; i < a.entities.size(); ++i)
      any_diff |= !(c.entities[i].pos == a.entities[i].pos);
  }
  CHECK(any_diff);
}

TEST_CASE("agent movement clips at walls") {
  GameState s = crafted_state(
      {{{0, Role::messenger, Movement::stationary}, {9, 9}, true}}, {0, 0},
      false, 30);
  env::step(s, Action::up);     // against the top wall
  CHECK(s.agent == Pos{0, 0});
  env::step(s, Action::left);   // against the left wall
  CHECK(s.agent == Pos{0, 0});
  env::step(s, Action::down);
  CHECK(s.agent == Pos{1, 0});
  env::step(s, Action::right);
  CHECK(s.agent == Pos{1, 1});
  env::step(s, Action::stay);
  CHECK(s.agent == Pos{1, 1});
  CHECK(s.t == 5);
}

TEST_CASE("chasing entities close in, fleeing entities back away") {
  for (int trial = 0; trial < 20; ++trial) {
    GameState s = crafted_state(
        {{{0, Role::messenger, Movement::chasing}, {1 + trial % 3, 7}, true},
         {{4, Role::goal, Movement::fleeing}, {8, 2 + trial % 4}, true},
         {{8, Role::enemy, Movement::stationary}, {9, 9}, true}},
        {5, 5}, false, 30);
    s.stream = Rng(99).fork("episode", static_cast<std::uint64_t>(trial))
                   .state();
    int d_chase = env::manhattan(s.entities[0].pos, s.agent);
    int d_flee = env::manhattan(s.entities[1].pos, s.agent);
    Pos enemy = s.entities[2].pos;
    env::step(s, Action::stay);
    CHECK(env::manhattan(s.entities[0].pos, s.agent) == d_chase - 1);
    int after = env::manhattan(s.entities[1].pos, s.agent);
    CHECK(after >= d_flee);  // walls can pin a fleeing entity
    CHECK(s.entities[2].pos == enemy);
  }
}

TEST_CASE("distances are judged against the agent's updated position") {
  // Entity at (5,7), agent moving right from (5,5) to (5,6): a chaser's best
  // cell is (5,6)... which is the agent itself -> immediate contact.
  GameState s = crafted_state(
      {{{0, Role::messenger, Movement::chasing}, {5, 7}, true}}, {5, 5},
      false, 30);
  auto r = env::step(s, Action::right);
  CHECK(s.agent == Pos{5, 6});
  CHECK(s.entities[0].pos == s.agent);
  CHECK(r.reward == doctest::Approx(0.5));
}

TEST_CASE("pickup: reward, message flag, entity removal") {
  GameState s = crafted_state(
      {{{0, Role::messenger, Movement::stationary}, {5, 6}, true},
       {{4, Role::goal, Movement::stationary}, {2, 2}, true}},
      {5, 5}, false, 30);
  auto r = env::step(s, Action::right);
  CHECK(r.reward == doctest::Approx(0.5));
  CHECK_FALSE(r.done);
  CHECK(s.has_message);
  CHECK_FALSE(s.entities[0].alive);
  CHECK(s.ret == doctest::Approx(0.5));

  // A second visit to the messenger's cell pays nothing.
  env::step(s, Action::left);
  auto r2 = env::step(s, Action::right);
  CHECK(r2.reward == 0.0);
}

TEST_CASE("delivery wins; premature goal contact loses") {
  GameState win = crafted_state(
      {{{4, Role::goal, Movement::stationary}, {5, 6}, true}}, {5, 5}, true,
      30);
  auto r = env::step(win, Action::right);
  CHECK(r.reward == doctest::Approx(1.0));
  CHECK(r.done);
  CHECK(win.won);
  CHECK(win.agent_alive);
  CHECK_FALSE(win.entities[0].alive);

  GameState lose = crafted_state(
      {{{4, Role::goal, Movement::stationary}, {5, 6}, true}}, {5, 5}, false,
      30);
  r = env::step(lose, Action::right);
  CHECK(r.reward == doctest::Approx(-1.0));
  CHECK(r.done);
  CHECK_FALSE(lose.won);
  CHECK_FALSE(lose.agent_alive);
}

TEST_CASE("enemy contact ends the game at -1") {
  GameState s = crafted_state(
      {{{8, Role::enemy, Movement::stationary}, {5, 6}, true}}, {5, 5}, false,
      30);
  auto r = env::step(s, Action::right);
  CHECK(r.reward == doctest::Approx(-1.0));
  CHECK(r.done);
  CHECK_FALSE(s.agent_alive);
  CHECK(s.ret == doctest::Approx(-1.0));
}

TEST_CASE("one event per step: the enemy outranks everyone on a shared cell") {
  GameState s = crafted_state(
      {{{0, Role::messenger, Movement::stationary}, {5, 6}, true},
       {{8, Role::enemy, Movement::stationary}, {5, 6}, true}},
      {5, 5}, false, 30);
  auto r = env::step(s, Action::right);
  CHECK(r.reward == doctest::Approx(-1.0));
  CHECK(r.done);
  CHECK_FALSE(s.has_message);         // pickup suppressed
  CHECK(s.entities[0].alive);         // messenger untouched
}

TEST_CASE("one event per step: the goal outranks the messenger") {
  GameState s = crafted_state(
      {{{0, Role::messenger, Movement::stationary}, {5, 6}, true},
       {{4, Role::goal, Movement::stationary}, {5, 6}, true}},
      {5, 5}, true, 30);
  auto r = env::step(s, Action::right);
  CHECK(r.reward == doctest::Approx(1.0));  // delivery, not a second pickup
  CHECK(s.won);
}

TEST_CASE("horizon exhaustion terminates without reward") {
  GameState s = crafted_state(
      {{{0, Role::messenger, Movement::stationary}, {9, 9}, true}}, {0, 0},
      false, 3);
  env::step(s, Action::stay);
  env::step(s, Action::stay);
  auto r = env::step(s, Action::stay);
  CHECK(r.done);
  CHECK(r.reward == 0.0);
  CHECK(s.terminated);
  CHECK_FALSE(s.won);
  CHECK(s.agent_alive);
  CHECK_THROWS_AS(env::step(s, Action::stay), UsageError);
}

TEST_CASE("first stage ends at its single objective") {
  GameConfig cfg = basic_config(Stage::S1);
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    GameState s = env::new_game(cfg, seed);
    if (s.has_message) continue;  // test the retrieval case
    while (!s.terminated) env::step(s, env::scripted_oracle_action(s));
    CHECK(s.won);
    CHECK(s.ret == doctest::Approx(0.5));
    CHECK(s.t <= 2);  // ring distance is 2
    ++wins;
  }
  CHECK(wins > 0);
}

TEST_CASE("observations mirror the state and relabel the agent on pickup") {
  GameState s = crafted_state(
      {{{3, Role::messenger, Movement::stationary}, {5, 6}, true},
       {{7, Role::goal, Movement::stationary}, {2, 2}, true}},
      {5, 5}, false, 30);
  env::Observation o = env::observe(s);
  CHECK(o.grid_symbols[5 * 10 + 6] == 4);  // kind 3 renders as 4
  CHECK(o.grid_symbols[5 * 10 + 5] == env::kAgentSymbolNoMsg);
  CHECK(o.grid_symbols[2 * 10 + 2] == 8);
  CHECK(o.tracks.size() == 2);
  CHECK(o.tracks[0].track == 0);
  CHECK(o.tracks[0].symbol == 4);
  CHECK(o.tracks[0].alive);

  env::step(s, Action::right);
  env::Observation o2 = env::observe(s);
  CHECK(o2.grid_symbols[5 * 10 + 6] == env::kAgentSymbolMsg);
  CHECK_FALSE(o2.tracks[0].alive);
  CHECK(o2.has_message);
  CHECK(o2.t == 1);
}

TEST_CASE("scripted oracle wins every solvable crafted game") {
  // Multi-phase game: fetch at one corner, deliver at the other.
  for (int variant = 0; variant < 10; ++variant) {
    GameState s = crafted_state(
        {{{0, Role::messenger, Movement::stationary}, {1, 1 + variant % 4},
          true},
         {{4, Role::goal, Movement::stationary}, {8, 8 - variant % 3}, true},
         {{8, Role::enemy, Movement::stationary}, {4, 4}, true}},
        {5, 5}, false, 32);
    while (!s.terminated) env::step(s, env::scripted_oracle_action(s));
    CHECK(s.won);
    CHECK(s.ret == doctest::Approx(1.5));
  }
}

TEST_CASE("transitions match the naive reference on random rollouts") {
  // Random games and random actions across stages; every transition must
  // coincide exactly with the independent rule transcription.
  Rng driver(2024);
  for (int rep = 0; rep < 60; ++rep) {
    Movement mv = rep % 3 == 0   ? Movement::chasing
                  : rep % 3 == 1 ? Movement::fleeing
                                 : Movement::stationary;
    GameConfig cfg = basic_config(rep % 2 ? Stage::WM : Stage::S2, mv);
    // Mix movements across entities for the free-movement stage.
    if (rep % 2) {
      cfg.assignments[0].movement = Movement::chasing;
      cfg.assignments[1].movement = Movement::fleeing;
      cfg.assignments[2].movement =
          rep % 4 < 2 ? Movement::stationary : Movement::chasing;
    }
    std::uint64_t seed = driver.next();
    GameState s = env::new_game(cfg, seed);

    reftest::RefState ref;
    ref.gh = cfg.grid_h;
    ref.gw = cfg.grid_w;
    ref.horizon = cfg.horizon;
    ref.single_objective = false;
    ref.ay = s.agent.y;
    ref.ax = s.agent.x;
    ref.has_msg = s.has_message;
    ref.stream = s.stream;
    for (const auto& e : s.entities)
      ref.ents.push_back({static_cast<int>(e.a.role),
                          static_cast<int>(e.a.movement), e.pos.y, e.pos.x,
                          e.alive});

    while (!s.terminated) {
      int a = driver.uniform_int(env::kNumActions);
      auto r = env::step(s, static_cast<Action>(a));
      double rr = reftest::ref_step(ref, a);
      REQUIRE(r.reward == rr);
      REQUIRE(s.agent.y == ref.ay);
      REQUIRE(s.agent.x == ref.ax);
      REQUIRE(s.has_message == ref.has_msg);
      REQUIRE(s.terminated == ref.terminated);
      REQUIRE(s.won == ref.won);
      for (std::size_t i = 0; i < s.entities.size(); ++i) {
        REQUIRE(s.entities[i].pos.y == ref.ents[i].y);
        REQUIRE(s.entities[i].pos.x == ref.ents[i].x);
        REQUIRE(s.entities[i].alive == ref.ents[i].alive);
      }
    }
  }
}

TEST_CASE("manuals describe every entity with its hidden attributes") {
  GameConfig cfg = basic_config(Stage::S2, Movement::chasing);
  REQUIRE(cfg.manual.sentences.size() == 3);
  REQUIRE(cfg.manual.alignment.size() == 3);
  // Sentences are shuffled; the hidden alignment is a permutation of the
  // entity instances.
  std::set<int> targets(cfg.manual.alignment.begin(),
                        cfg.manual.alignment.end());
  CHECK(targets == std::set<int>{0, 1, 2});
  for (const auto& sent : cfg.manual.sentences) CHECK(sent.size() >= 4);
}

TEST_SUITE_END();

}  // namespace
}  // namespace courier
