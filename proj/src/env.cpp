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

#include "courier/env/env.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <set>
#include <sstream>

namespace courier::env {

namespace {

// Token banks. Bumping any bank requires bumping vocab_version(): split
// manifests and embedding golden files key on it.
constexpr int kVocabVersion = 1;

std::vector<EntityKind> make_kinds() {
  auto k = [](int id, std::string name,
              std::vector<std::string> syn) -> EntityKind {
    syn.insert(syn.begin(), name);
    return EntityKind{id, std::move(name), std::move(syn)};
  };
  return {
      k(0, "airplane", {"plane", "jet", "aircraft"}),
      k(1, "mage", {"wizard", "sorcerer", "magician"}),
      k(2, "dog", {"hound", "canine", "pup"}),
      k(3, "bird", {"sparrow", "crow", "fowl"}),
      k(4, "fish", {"trout", "salmon", "cod"}),
      k(5, "scientist", {"researcher", "chemist", "scholar"}),
      k(6, "thief", {"burglar", "robber", "crook"}),
      k(7, "ship", {"boat", "vessel", "ferry"}),
      k(8, "ball", {"orb", "sphere", "globe"}),
      k(9, "robot", {"android", "automaton", "machine"}),
      k(10, "queen", {"monarch", "empress", "ruler"}),
      k(11, "sword", {"blade", "saber", "dagger"}),
  };
}

const std::vector<std::string>& role_phrases(Role r) {
  static const std::vector<std::string> messenger = {
      "has the classified report",
      "is carrying the secret message",
      "holds the crucial document",
      "possesses the vital intel",
  };
  static const std::vector<std::string> goal = {
      "is the target for the message",
      "is the destination of the document",
      "awaits the delivery",
      "is the drop off point",
  };
  static const std::vector<std::string> enemy = {
      "is the deadly adversary",
      "will destroy you on contact",
      "is the dangerous foe",
      "is your lethal enemy",
  };
  switch (r) {
    case Role::messenger: return messenger;
    case Role::goal: return goal;
    case Role::enemy: return enemy;
  }
  throw ConfigError("bad role");
}

const std::vector<std::string>& movement_phrases(Movement m) {
  static const std::vector<std::string> chasing = {
      "approaching you",
      "coming toward you",
      "chasing you",
      "closing in on you",
  };
  static const std::vector<std::string> fleeing = {
      "fleeing from you",
      "running away from you",
      "escaping from you",
      "retreating from you",
  };
  static const std::vector<std::string> stationary = {
      "standing still",
      "not moving",
      "staying in place",
      "frozen in place",
  };
  switch (m) {
    case Movement::chasing: return chasing;
    case Movement::fleeing: return fleeing;
    case Movement::stationary: return stationary;
  }
  throw ConfigError("bad movement");
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

// Surface templates; {n} name, {m} movement phrase, {r} role phrase.
const std::vector<std::string>& sentence_templates() {
  static const std::vector<std::string> t = {
      "the {n} {m} {r}",
      "the {n} that is {m} {r}",
      "the {n} {r} and is {m}",
      "{m} , the {n} {r}",
  };
  return t;
}

std::string fill_template(const std::string& tpl, const std::string& n,
                          const std::string& m, const std::string& r) {
  std::string out = tpl;
  auto replace = [&out](const std::string& slot, const std::string& value) {
    auto p = out.find(slot);
    out.replace(p, slot.size(), value);
  };
  replace("{n}", n);
  replace("{m}", m);
  replace("{r}", r);
  return out;
}

constexpr std::array<int, 5> kDy = {-1, 1, 0, 0, 0};  // up down right left stay
constexpr std::array<int, 5> kDx = {0, 0, 1, -1, 0};

bool in_bounds(Pos p, int gh, int gw) {
  return p.y >= 0 && p.y < gh && p.x >= 0 && p.x < gw;
}

// One greedy Manhattan step toward (chasing) or away from (fleeing) the agent.
// Candidates are the four neighbours plus staying put, in action order; ties
// are broken uniformly by the per-(step, entity) stream.
Pos move_entity(const EntityState& e, Pos agent, int gh, int gw, Rng&& rng) {
  if (e.a.movement == Movement::stationary) return e.pos;
  std::vector<Pos> cands;
  for (int k = 0; k < 5; ++k) {
    Pos c{e.pos.y + kDy[static_cast<std::size_t>(k)],
          e.pos.x + kDx[static_cast<std::size_t>(k)]};
    if (in_bounds(c, gh, gw)) cands.push_back(c);
  }
  bool chase = e.a.movement == Movement::chasing;
  int best = chase ? 1 << 20 : -1;
  std::vector<Pos> bests;
  for (Pos c : cands) {
    int d = manhattan(c, agent);
    if ((chase && d < best) || (!chase && d > best)) {
      best = d;
      bests.clear();
    }
    if (d == best) bests.push_back(c);
  }
  return bests[static_cast<std::size_t>(
      rng.uniform_int(static_cast<int>(bests.size())))];
}

}  // namespace

const std::vector<EntityKind>& entity_kinds() {
  static const std::vector<EntityKind> kinds = make_kinds();
  return kinds;
}

int vocab_version() { return kVocabVersion; }

std::uint64_t vocab_fingerprint() {
  std::string all = "v" + std::to_string(kVocabVersion);
  for (const auto& k : entity_kinds())
    for (const auto& s : k.synonyms) all += "|" + s;
  for (Role r : {Role::messenger, Role::goal, Role::enemy})
    for (const auto& p : role_phrases(r)) all += "|" + p;
  for (Movement m :
       {Movement::chasing, Movement::fleeing, Movement::stationary})
    for (const auto& p : movement_phrases(m)) all += "|" + p;
  for (const auto& t : sentence_templates()) all += "|" + t;
  return fnv1a64(all);
}

std::string to_string(Role r) {
  switch (r) {
    case Role::messenger: return "messenger";
    case Role::goal: return "goal";
    case Role::enemy: return "enemy";
  }
  throw ConfigError("bad role");
}

std::string to_string(Movement m) {
  switch (m) {
    case Movement::chasing: return "chasing";
    case Movement::fleeing: return "fleeing";
    case Movement::stationary: return "stationary";
  }
  throw ConfigError("bad movement");
}

std::string to_string(Action a) {
  switch (a) {
    case Action::up: return "up";
    case Action::down: return "down";
    case Action::right: return "right";
    case Action::left: return "left";
    case Action::stay: return "stay";
  }
  throw ConfigError("bad action");
}

Role role_from_string(const std::string& s) {
  if (s == "messenger") return Role::messenger;
  if (s == "goal") return Role::goal;
  if (s == "enemy") return Role::enemy;
  throw ConfigError("unknown role: " + s);
}

Movement movement_from_string(const std::string& s) {
  if (s == "chasing") return Movement::chasing;
  if (s == "fleeing") return Movement::fleeing;
  if (s == "stationary") return Movement::stationary;
  throw ConfigError("unknown movement: " + s);
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::S1: return "S1";
    case Stage::S2: return "S2";
    case Stage::S2dev: return "S2dev";
    case Stage::S3: return "S3";
    case Stage::WM: return "WM";
  }
  throw ConfigError("bad stage");
}

Stage stage_from_string(const std::string& s) {
  std::string k;
  for (char c : s) k.push_back(static_cast<char>(std::tolower(c)));
  if (k == "s1") return Stage::S1;
  if (k == "s2") return Stage::S2;
  if (k == "s2dev") return Stage::S2dev;
  if (k == "s3") return Stage::S3;
  if (k == "wm") return Stage::WM;
  throw ConfigError("unknown stage: " + s);
}

int principal_count(const GameConfig& cfg) {
  return cfg.stage == Stage::S3 ? 3 : static_cast<int>(cfg.assignments.size());
}

void validate_config(const GameConfig& cfg) {
  std::size_t want = cfg.stage == Stage::S3 ? 5 : 3;
  if (cfg.assignments.size() != want)
    throw ConfigError("stage " + to_string(cfg.stage) + " expects " +
                      std::to_string(want) + " entities, got " +
                      std::to_string(cfg.assignments.size()));
  int np = principal_count(cfg);
  std::array<int, 3> role_counts = {0, 0, 0};
  for (int i = 0; i < np; ++i) {
    const auto& a = cfg.assignments[static_cast<std::size_t>(i)];
    if (a.kind < 0 || a.kind >= kNumKinds)
      throw ConfigError("entity kind out of range");
    role_counts[static_cast<std::size_t>(a.role)]++;
  }
  for (int c : role_counts)
    if (c != 1)
      throw ConfigError("principal entities must cover each role exactly once");
  if (cfg.stage == Stage::S3) {
    for (std::size_t i = 3; i < 5; ++i)
      if (cfg.assignments[i].role != Role::enemy)
        throw ConfigError("duplicate entities must have role enemy");
    if (!cfg.distractor) throw ConfigError("S3 config needs a distractor");
    if (cfg.distractor->role == Role::enemy)
      throw ConfigError("distractor role must not be enemy");
    if (!cfg.manual.sentences.empty() && cfg.manual.sentences.size() != 6)
      throw ConfigError("S3 manual must have 6 sentences");
  } else if (!cfg.manual.sentences.empty() &&
             cfg.manual.sentences.size() != cfg.assignments.size()) {
    throw ConfigError("manual sentence count must match entity count");
  }
  if (cfg.stage == Stage::S1)
    for (const auto& a : cfg.assignments)
      if (a.movement != Movement::stationary)
        throw ConfigError("first-stage entities must be stationary");
  if (cfg.horizon <= 0) throw ConfigError("horizon must be positive");
  if (cfg.grid_h < 3 || cfg.grid_w < 3) throw ConfigError("grid too small");
}

GameState new_game(const GameConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  GameState s;
  s.cfg = cfg;
  Rng root(cfg.seed);
  Rng init = root.fork("init", seed);
  s.stream = root.fork("episode", seed).state();

  int gh = cfg.grid_h, gw = cfg.grid_w;
  s.entities.resize(cfg.assignments.size());
  for (std::size_t i = 0; i < cfg.assignments.size(); ++i)
    s.entities[i].a = cfg.assignments[i];

  if (cfg.stage == Stage::S1) {
    s.agent = Pos{gh / 2, gw / 2};
    // Ring of cells at Manhattan distance exactly 2 from the agent.
    std::vector<Pos> ring;
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x)
        if (manhattan(Pos{y, x}, s.agent) == 2) ring.push_back(Pos{y, x});
    if (ring.size() < cfg.assignments.size())
      throw ConfigError("grid too small for ring placement");
    for (auto& e : s.entities) {
      std::size_t j =
          static_cast<std::size_t>(init.uniform_int(static_cast<int>(ring.size())));
      e.pos = ring[j];
      ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(j));
    }
    s.has_message = init.bernoulli(0.5);
  } else {
    // Uniform distinct cells for the agent and every entity.
    std::vector<Pos> cells;
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x) cells.push_back(Pos{y, x});
    if (cells.size() < cfg.assignments.size() + 1)
      throw ConfigError("grid too small for placement");
    auto draw = [&cells, &init]() {
      std::size_t j =
          static_cast<std::size_t>(init.uniform_int(static_cast<int>(cells.size())));
      Pos p = cells[j];
      cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(j));
      return p;
    };
    s.agent = draw();
    for (auto& e : s.entities) e.pos = draw();
    s.has_message = false;
  }
  return s;
}

StepResult step(GameState& s, Action action) {
  if (s.terminated) throw UsageError("step on a terminated game");

  int gh = s.cfg.grid_h, gw = s.cfg.grid_w;
  Pos next{s.agent.y + kDy[static_cast<std::size_t>(action)],
           s.agent.x + kDx[static_cast<std::size_t>(action)]};
  if (in_bounds(next, gh, gw)) s.agent = next;  // walls clip the move

  Rng episode = Rng::from_state(s.stream);
  for (std::size_t i = 0; i < s.entities.size(); ++i) {
    EntityState& e = s.entities[i];
    if (!e.alive) continue;
    e.pos = move_entity(e, s.agent, gh, gw,
                        episode.fork("ent", static_cast<std::uint64_t>(s.t),
                                     static_cast<std::uint64_t>(i)));
  }

  // Same-cell interactions, at most one event per step. Enemies dominate,
  // then the goal, then the messenger.
  StepResult out;
  bool enemy_hit = false, goal_hit = false;
  EntityState* messenger_hit = nullptr;
  for (auto& e : s.entities) {
    if (!e.alive || !(e.pos == s.agent)) continue;
    if (e.a.role == Role::enemy) enemy_hit = true;
    else if (e.a.role == Role::goal) goal_hit = true;
    else if (e.a.role == Role::messenger && !s.has_message)
      messenger_hit = &e;
  }
  if (enemy_hit) {
    out.reward = -1.0;
    s.terminated = true;
    s.agent_alive = false;
  } else if (goal_hit) {
    if (s.has_message) {
      out.reward = 1.0;
      s.terminated = true;
      s.won = true;
      for (auto& e : s.entities)
        if (e.a.role == Role::goal && e.pos == s.agent) e.alive = false;
    } else {
      out.reward = -1.0;
      s.terminated = true;
      s.agent_alive = false;
    }
  } else if (messenger_hit != nullptr) {
    out.reward = 0.5;
    s.has_message = true;
    messenger_hit->alive = false;
    if (s.cfg.stage == Stage::S1) {
      // Single-objective stage: retrieval ends (and wins) the game.
      s.terminated = true;
      s.won = true;
    }
  }

  s.ret += out.reward;
  s.t += 1;
  if (!s.terminated && s.t >= s.cfg.horizon) s.terminated = true;
  out.done = s.terminated;
  return out;
}

Observation observe(const GameState& s) {
  Observation o;
  o.grid_h = s.cfg.grid_h;
  o.grid_w = s.cfg.grid_w;
  o.grid_symbols.assign(
      static_cast<std::size_t>(o.grid_h) * static_cast<std::size_t>(o.grid_w),
      0);
  o.tracks.reserve(s.entities.size());
  for (std::size_t i = 0; i < s.entities.size(); ++i) {
    const EntityState& e = s.entities[i];
    TrackObs t;
    t.track = static_cast<int>(i);
    t.symbol = e.a.kind + 1;
    t.pos = e.pos;
    t.alive = e.alive;
    o.tracks.push_back(t);
    if (e.alive)
      o.grid_symbols[static_cast<std::size_t>(e.pos.y * o.grid_w + e.pos.x)] =
          t.symbol;
  }
  o.agent = s.agent;
  o.agent_alive = s.agent_alive;
  o.has_message = s.has_message;
  if (s.agent_alive)
    o.grid_symbols[static_cast<std::size_t>(s.agent.y * o.grid_w +
                                            s.agent.x)] =
        s.has_message ? kAgentSymbolMsg : kAgentSymbolNoMsg;
  o.t = s.t;
  return o;
}

Manual generate_manual(const std::vector<EntityAssignment>& assignments,
                       const std::optional<EntityAssignment>& distractor,
                       Rng& rng) {
  if (sentence_templates().empty()) throw ConfigError("empty template bank");
  Manual m;
  auto emit = [&rng](const EntityAssignment& a) {
    const auto& kinds = entity_kinds();
    const auto& syn = kinds[static_cast<std::size_t>(a.kind)].synonyms;
    const auto& moves = movement_phrases(a.movement);
    const auto& roles = role_phrases(a.role);
    const auto& tpls = sentence_templates();
    const std::string& n =
        syn[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(syn.size())))];
    const std::string& mv = moves[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(moves.size())))];
    const std::string& rl = roles[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(roles.size())))];
    return tokenize(
        fill_template(tpls[static_cast<std::size_t>(rng.uniform_int(
                          static_cast<int>(tpls.size())))],
                      n, mv, rl));
  };
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    m.sentences.push_back(emit(assignments[i]));
    m.alignment.push_back(static_cast<int>(i));
  }
  if (distractor) {
    m.sentences.push_back(emit(*distractor));
    m.alignment.push_back(-1);
  }
  // Fisher-Yates shuffle of sentence order, alignment kept in lockstep.
  for (std::size_t i = m.sentences.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(i)));
    std::swap(m.sentences[i - 1], m.sentences[j]);
    std::swap(m.alignment[i - 1], m.alignment[j]);
  }
  return m;
}

Action scripted_oracle_action(const GameState& s) {
  // BFS toward the current objective, treating every cell that would end the
  // game badly (enemies; the goal while the message is missing) as a wall.
  int gh = s.cfg.grid_h, gw = s.cfg.grid_w;
  std::vector<int> wall(static_cast<std::size_t>(gh) * gw, 0);
  Pos target = s.agent;
  bool have_target = false;
  for (const auto& e : s.entities) {
    if (!e.alive) continue;
    bool is_target = s.has_message ? (e.a.role == Role::goal)
                                   : (e.a.role == Role::messenger);
    if (is_target) {
      target = e.pos;
      have_target = true;
    } else {
      wall[static_cast<std::size_t>(e.pos.y * gw + e.pos.x)] = 1;
    }
  }
  if (!have_target) return Action::stay;

  std::vector<int> prev_action(static_cast<std::size_t>(gh) * gw, -1);
  std::vector<int> seen(static_cast<std::size_t>(gh) * gw, 0);
  std::deque<Pos> q;
  q.push_back(s.agent);
  seen[static_cast<std::size_t>(s.agent.y * gw + s.agent.x)] = 1;
  while (!q.empty()) {
    Pos p = q.front();
    q.pop_front();
    if (p == target) break;
    for (int k = 0; k < 4; ++k) {
      Pos c{p.y + kDy[static_cast<std::size_t>(k)],
            p.x + kDx[static_cast<std::size_t>(k)]};
      if (!in_bounds(c, gh, gw)) continue;
      std::size_t ci = static_cast<std::size_t>(c.y * gw + c.x);
      if (seen[ci] || (wall[ci] && !(c == target))) continue;
      seen[ci] = 1;
      prev_action[ci] = k;
      q.push_back(c);
    }
  }
  std::size_t ti = static_cast<std::size_t>(target.y * gw + target.x);
  if (!seen[ti]) return Action::stay;  // boxed in
  // Walk back from the target to find the first move off the agent cell.
  Pos p = target;
  int act = static_cast<int>(Action::stay);
  while (!(p == s.agent)) {
    int k = prev_action[static_cast<std::size_t>(p.y * gw + p.x)];
    act = k;
    p = Pos{p.y - kDy[static_cast<std::size_t>(k)],
            p.x - kDx[static_cast<std::size_t>(k)]};
  }
  return static_cast<Action>(act);
}

}  // namespace courier::env
