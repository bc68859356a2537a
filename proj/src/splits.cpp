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

#include "courier/env/splits.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

namespace courier::env {

namespace {

using Kinds = std::array<int, 3>;

constexpr int kManifestVersion = 1;
constexpr int kGenerateAttempts = 1000;

std::vector<Kinds> enumerate_valid_sets() {
  std::vector<Kinds> out;
  for (int a = 0; a < kNumKinds; ++a)
    for (int b = a + 1; b < kNumKinds; ++b)
      for (int c = b + 1; c < kNumKinds; ++c) {
        Kinds k = {a, b, c};
        if (kind_set_valid(k)) out.push_back(k);
      }
  return out;
}

const std::set<Kinds>& reserved_sets() {
  static const std::set<Kinds> r = [] {
    std::set<Kinds> s;
    const auto& v = valid_kind_sets();
    for (std::size_t i = 0; i < v.size(); i += 5) s.insert(v[i]);
    return s;
  }();
  return r;
}

Kinds sorted_kinds(const GameConfig& cfg) {
  Kinds k = {cfg.assignments[0].kind, cfg.assignments[1].kind,
             cfg.assignments[2].kind};
  std::sort(k.begin(), k.end());
  return k;
}

bool movement_bijection_stage(Stage stage) {
  return stage == Stage::S2 || stage == Stage::S2dev || stage == Stage::S3;
}

// Whether eval splits must keep the single train movement combination.
bool movement_locked_in_eval(Stage stage) {
  return stage == Stage::S1 || stage == Stage::S2dev;
}

const std::array<std::array<int, 3>, 6>& role_perms() {
  static const std::array<std::array<int, 3>, 6> p = {{{0, 1, 2},
                                                       {0, 2, 1},
                                                       {1, 0, 2},
                                                       {1, 2, 0},
                                                       {2, 0, 1},
                                                       {2, 1, 0}}};
  return p;
}

// All movement assignments a split may use for the given stage and split
// evaluated lazily as index triples over {chasing, fleeing, stationary}.
std::vector<std::array<int, 3>> movement_combos(Stage stage, bool lock_multiset) {
  std::vector<std::array<int, 3>> out;
  if (stage == Stage::S1) {
    int s = static_cast<int>(Movement::stationary);
    out.push_back({s, s, s});
    return out;
  }
  if (lock_multiset) {
    for (const auto& p : role_perms()) out.push_back(p);
    return out;
  }
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) out.push_back({a, b, c});
  return out;
}

struct Assignment3 {
  Kinds kinds;                    // unsorted: position i pairs with roles[i]
  std::array<int, 3> roles;
  std::array<int, 3> moves;
};

bool roles_allowed(const Kinds& k, const std::array<int, 3>& roles) {
  for (int i = 0; i < 3; ++i)
    if (roles[static_cast<std::size_t>(i)] ==
        forbidden_role_index(k[static_cast<std::size_t>(i)]))
      return false;
  return true;
}

bool moves_allowed(const Kinds& k, const std::array<int, 3>& moves) {
  for (int i = 0; i < 3; ++i)
    if (moves[static_cast<std::size_t>(i)] ==
        forbidden_move_index(k[static_cast<std::size_t>(i)]))
      return false;
  return true;
}

bool every_entity_novel(const Kinds& k, const std::array<int, 3>& roles,
                        const std::array<int, 3>& moves) {
  for (std::size_t i = 0; i < 3; ++i) {
    bool role_novel = roles[i] == forbidden_role_index(k[i]);
    bool move_novel = moves[i] == forbidden_move_index(k[i]);
    if (!role_novel && !move_novel) return false;
  }
  return true;
}

Kinds draw_kind_set(Rng& rng, bool reserved) {
  const auto& v = valid_kind_sets();
  for (int attempt = 0; attempt < kGenerateAttempts; ++attempt) {
    Kinds k = v[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(v.size())))];
    if (kind_set_reserved(k) == reserved) return k;
  }
  throw GenerationError("could not draw a kind set");
}

// Samples principal kinds/roles/movements for one config of the given split.
Assignment3 sample_principals(Stage stage, Split split, Rng& rng) {
  bool reserved = split == Split::new_combo || split == Split::new_all;
  bool novel_attrs = split == Split::new_attr || split == Split::new_all;
  bool lock = movement_bijection_stage(stage) &&
              (split == Split::train || split == Split::dev ||
               movement_locked_in_eval(stage));
  auto combos = movement_combos(stage, lock);

  for (int attempt = 0; attempt < kGenerateAttempts; ++attempt) {
    Kinds set = draw_kind_set(rng, reserved);
    // Kind order within the config: shuffle so roles are not positional.
    Kinds k = set;
    for (std::size_t i = 3; i > 1; --i)
      std::swap(k[i - 1], k[static_cast<std::size_t>(
                              rng.uniform_int(static_cast<int>(i)))]);

    std::vector<Assignment3> options;
    for (const auto& roles : role_perms()) {
      for (const auto& moves : combos) {
        if (novel_attrs) {
          if (!every_entity_novel(k, roles, moves)) continue;
        } else {
          if (!roles_allowed(k, roles)) continue;
          if (stage != Stage::S1 && !moves_allowed(k, moves)) continue;
        }
        options.push_back(Assignment3{k, roles, moves});
      }
    }
    if (options.empty()) continue;
    return options[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(options.size())))];
  }
  throw GenerationError("split constraints unsatisfiable for " +
                        to_string(stage) + "/" + to_string(split));
}

GameConfig build_config(Stage stage, const Assignment3& a, Rng& rng) {
  GameConfig cfg;
  cfg.stage = stage;
  cfg.horizon = default_horizon(stage);
  cfg.seed = rng.next();
  for (std::size_t i = 0; i < 3; ++i) {
    EntityAssignment e;
    e.kind = a.kinds[i];
    e.role = static_cast<Role>(a.roles[i]);
    e.movement = static_cast<Movement>(a.moves[i]);
    cfg.assignments.push_back(e);
  }
  if (stage == Stage::S3) {
    // Two duplicates: same kinds as the messenger and the goal, role enemy,
    // movement different from the principal's and never train-forbidden.
    auto principal_of = [&cfg](Role r) {
      for (const auto& e : cfg.assignments)
        if (e.role == r) return e;
      throw ConfigError("missing role");
    };
    for (Role r : {Role::messenger, Role::goal}) {
      EntityAssignment p = principal_of(r);
      std::vector<int> moves;
      for (int m = 0; m < 3; ++m)
        if (m != static_cast<int>(p.movement) &&
            m != forbidden_move_index(p.kind))
          moves.push_back(m);
      if (moves.empty())
        for (int m = 0; m < 3; ++m)
          if (m != static_cast<int>(p.movement)) moves.push_back(m);
      EntityAssignment dup;
      dup.kind = p.kind;
      dup.role = Role::enemy;
      dup.movement = static_cast<Movement>(moves[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(moves.size())))]);
      cfg.assignments.push_back(dup);
    }
    // Extraneous sentence: the enemy's kind with a different movement and a
    // non-enemy role; the entity itself never appears on the grid.
    EntityAssignment enemy = principal_of(Role::enemy);
    EntityAssignment d;
    d.kind = enemy.kind;
    d.role = rng.bernoulli(0.5) ? Role::messenger : Role::goal;
    std::vector<int> moves;
    for (int m = 0; m < 3; ++m)
      if (m != static_cast<int>(enemy.movement) &&
          m != forbidden_move_index(enemy.kind))
        moves.push_back(m);
    if (moves.empty())
      for (int m = 0; m < 3; ++m)
        if (m != static_cast<int>(enemy.movement)) moves.push_back(m);
    d.movement = static_cast<Movement>(moves[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(moves.size())))]);
    cfg.distractor = d;
  }
  Rng manual_rng = rng.fork("manual");
  cfg.manual =
      generate_manual(cfg.assignments, cfg.distractor, manual_rng);
  validate_config(cfg);
  return cfg;
}

struct Triple {
  int kind, role, move;
  auto operator<=>(const Triple&) const = default;
};

// Every (kind, role, movement) combination the train distribution admits.
std::vector<Triple> allowed_train_triples(Stage stage) {
  std::vector<Triple> out;
  for (int k = 0; k < kNumKinds; ++k)
    for (int r = 0; r < 3; ++r) {
      if (r == forbidden_role_index(k)) continue;
      if (stage == Stage::S1) {
        out.push_back({k, r, static_cast<int>(Movement::stationary)});
        continue;
      }
      for (int m = 0; m < 3; ++m) {
        if (m == forbidden_move_index(k)) continue;
        out.push_back({k, r, m});
      }
    }
  return out;
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::new_combo: return "NewCombo";
    case Split::new_attr: return "NewAttr";
    case Split::new_all: return "NewAll";
  }
  throw ConfigError("bad split");
}

Split split_from_string(const std::string& s) {
  std::string k;
  for (char c : s) k.push_back(static_cast<char>(std::tolower(c)));
  if (k == "train") return Split::train;
  if (k == "dev") return Split::dev;
  if (k == "newcombo" || k == "new_combo") return Split::new_combo;
  if (k == "newattr" || k == "new_attr") return Split::new_attr;
  if (k == "newall" || k == "new_all" || k == "test") return Split::new_all;
  throw ConfigError("unknown split: " + s);
}

int forbidden_role_index(int kind) { return kind % 3; }
int forbidden_move_index(int kind) { return (kind + 1) % 3; }

bool kind_set_valid(const Kinds& kinds) {
  // A role bijection avoiding forbidden roles exists unless all three kinds
  // forbid the same role (each kind allows 2 of 3 roles; Hall's condition
  // only fails on a shared singleton complement). The same residue classes
  // govern forbidden movements, so one test covers both.
  return !(forbidden_role_index(kinds[0]) == forbidden_role_index(kinds[1]) &&
           forbidden_role_index(kinds[1]) == forbidden_role_index(kinds[2]));
}

bool kind_set_reserved(const Kinds& kinds) {
  return reserved_sets().count(kinds) > 0;
}

const std::vector<Kinds>& valid_kind_sets() {
  static const std::vector<Kinds> v = enumerate_valid_sets();
  return v;
}

int default_horizon(Stage stage) { return stage == Stage::S1 ? 4 : 32; }

std::vector<GameConfig> generate_split(Stage stage, Split split, int count,
                                       std::uint64_t seed) {
  if (count <= 0) throw UsageError("generate_split: count must be positive");
  Rng root = Rng(seed).fork(to_string(stage) + "/" + to_string(split));
  std::vector<GameConfig> out;

  if (split == Split::train) {
    // Coverage-first: realize every admissible (kind, role, movement) at
    // least once so per-entity "seen in train" holds literally against the
    // manifest, then fill with unconstrained draws.
    std::set<Triple> uncovered;
    for (const Triple& t : allowed_train_triples(stage)) uncovered.insert(t);
    int idx = 0;
    bool lock = movement_bijection_stage(stage);
    auto combos = movement_combos(stage, lock);
    while (!uncovered.empty() && static_cast<int>(out.size()) < count) {
      Triple want = *uncovered.begin();
      Rng rng = root.fork("cfg", static_cast<std::uint64_t>(idx++));
      bool ok = false;
      Assignment3 got;
      for (int attempt = 0; attempt < kGenerateAttempts && !ok; ++attempt) {
        Kinds set = draw_kind_set(rng, false);
        if (std::find(set.begin(), set.end(), want.kind) == set.end()) {
          set[static_cast<std::size_t>(rng.uniform_int(3))] = want.kind;
          std::sort(set.begin(), set.end());
          if (set[0] == set[1] || set[1] == set[2]) continue;
          if (!kind_set_valid(set) || kind_set_reserved(set)) continue;
        }
        Kinds k = set;
        for (std::size_t i = 3; i > 1; --i)
          std::swap(k[i - 1], k[static_cast<std::size_t>(
                                  rng.uniform_int(static_cast<int>(i)))]);
        std::vector<Assignment3> options;
        for (const auto& roles : role_perms())
          for (const auto& moves : combos) {
            bool hit = false;
            for (std::size_t i = 0; i < 3; ++i)
              if (k[i] == want.kind && roles[i] == want.role &&
                  moves[i] == want.move)
                hit = true;
            if (!hit) continue;
            if (!roles_allowed(k, roles)) continue;
            if (stage != Stage::S1 && !moves_allowed(k, moves)) continue;
            options.push_back(Assignment3{k, roles, moves});
          }
        if (options.empty()) continue;
        got = options[static_cast<std::size_t>(
            rng.uniform_int(static_cast<int>(options.size())))];
        ok = true;
      }
      if (!ok)
        throw GenerationError("coverage generation failed for kind " +
                              std::to_string(want.kind));
      GameConfig cfg = build_config(stage, got, rng);
      for (int i = 0; i < principal_count(cfg); ++i) {
        const auto& e = cfg.assignments[static_cast<std::size_t>(i)];
        uncovered.erase(Triple{e.kind, static_cast<int>(e.role),
                               static_cast<int>(e.movement)});
      }
      out.push_back(std::move(cfg));
    }
    while (static_cast<int>(out.size()) < count) {
      Rng rng = root.fork("cfg", static_cast<std::uint64_t>(idx++));
      out.push_back(
          build_config(stage, sample_principals(stage, split, rng), rng));
    }
    return out;
  }

  for (int i = 0; i < count; ++i) {
    Rng rng = root.fork("cfg", static_cast<std::uint64_t>(i));
    out.push_back(
        build_config(stage, sample_principals(stage, split, rng), rng));
  }
  return out;
}

// ---- Manifest serialization --------------------------------------------------

namespace {

using nlohmann::json;

json config_to_json(const GameConfig& cfg) {
  json j;
  j["stage"] = to_string(cfg.stage);
  j["seed"] = cfg.seed;
  j["horizon"] = cfg.horizon;
  j["grid"] = {cfg.grid_h, cfg.grid_w};
  j["assignments"] = json::array();
  for (const auto& a : cfg.assignments)
    j["assignments"].push_back({{"kind", a.kind},
                                {"role", to_string(a.role)},
                                {"movement", to_string(a.movement)}});
  if (cfg.distractor)
    j["distractor"] = {{"kind", cfg.distractor->kind},
                       {"role", to_string(cfg.distractor->role)},
                       {"movement", to_string(cfg.distractor->movement)}};
  else
    j["distractor"] = nullptr;
  j["manual"] = cfg.manual.sentences;
  j["alignment"] = cfg.manual.alignment;
  return j;
}

GameConfig config_from_json(const json& j) {
  GameConfig cfg;
  cfg.stage = stage_from_string(j.at("stage").get<std::string>());
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.horizon = j.at("horizon").get<int>();
  cfg.grid_h = j.at("grid").at(0).get<int>();
  cfg.grid_w = j.at("grid").at(1).get<int>();
  for (const auto& a : j.at("assignments")) {
    EntityAssignment e;
    e.kind = a.at("kind").get<int>();
    e.role = role_from_string(a.at("role").get<std::string>());
    e.movement = movement_from_string(a.at("movement").get<std::string>());
    cfg.assignments.push_back(e);
  }
  if (!j.at("distractor").is_null()) {
    EntityAssignment d;
    d.kind = j["distractor"].at("kind").get<int>();
    d.role = role_from_string(j["distractor"].at("role").get<std::string>());
    d.movement =
        movement_from_string(j["distractor"].at("movement").get<std::string>());
    cfg.distractor = d;
  }
  cfg.manual.sentences =
      j.at("manual").get<std::vector<std::vector<std::string>>>();
  cfg.manual.alignment = j.at("alignment").get<std::vector<int>>();
  return cfg;
}

}  // namespace

void write_split_manifest(const std::string& path, const SplitManifest& m) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  json header;
  header["schema"] = "courier.split.v" + std::to_string(kManifestVersion);
  header["stage"] = to_string(m.stage);
  header["split"] = to_string(m.split);
  header["seed"] = m.seed;
  header["vocab"] = vocab_fingerprint();
  header["count"] = m.configs.size();
  os << header.dump() << "\n";
  for (const auto& cfg : m.configs) os << config_to_json(cfg).dump() << "\n";
  if (!os) throw IoError("write failed: " + path);
}

SplitManifest read_split_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty manifest: " + path);
  json header = json::parse(line);
  SplitManifest m;
  std::string schema = header.at("schema").get<std::string>();
  if (schema != "courier.split.v" + std::to_string(kManifestVersion))
    throw IoError("unsupported manifest schema: " + schema);
  m.version = kManifestVersion;
  m.stage = stage_from_string(header.at("stage").get<std::string>());
  m.split = split_from_string(header.at("split").get<std::string>());
  m.seed = header.at("seed").get<std::uint64_t>();
  m.vocab = header.at("vocab").get<std::uint64_t>();
  std::size_t count = header.at("count").get<std::size_t>();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    m.configs.push_back(config_from_json(json::parse(line)));
  }
  if (m.configs.size() != count)
    throw IoError("manifest count mismatch in " + path);
  return m;
}

// ---- Soundness checking ---------------------------------------------------------

std::string check_split(const SplitManifest& m,
                        const SplitManifest* train_manifest) {
  std::set<Kinds> train_sets;
  std::set<Triple> train_triples;
  if (train_manifest != nullptr) {
    for (const auto& cfg : train_manifest->configs) {
      train_sets.insert(sorted_kinds(cfg));
      for (int i = 0; i < principal_count(cfg); ++i) {
        const auto& e = cfg.assignments[static_cast<std::size_t>(i)];
        train_triples.insert(Triple{e.kind, static_cast<int>(e.role),
                                    static_cast<int>(e.movement)});
      }
    }
  }

  for (std::size_t ci = 0; ci < m.configs.size(); ++ci) {
    const GameConfig& cfg = m.configs[ci];
    auto fail = [&ci](const std::string& why) {
      return "config " + std::to_string(ci) + ": " + why;
    };
    try {
      validate_config(cfg);
    } catch (const ConfigError& e) {
      return fail(e.what());
    }
    if (cfg.stage != m.stage) return fail("stage mismatch");

    Kinds set = sorted_kinds(cfg);
    if (!kind_set_valid(set)) return fail("invalid kind set");
    bool reserved = kind_set_reserved(set);

    int np = principal_count(cfg);
    std::vector<int> roles, moves;
    for (int i = 0; i < np; ++i) {
      roles.push_back(
          static_cast<int>(cfg.assignments[static_cast<std::size_t>(i)].role));
      moves.push_back(static_cast<int>(
          cfg.assignments[static_cast<std::size_t>(i)].movement));
    }
    auto role_train_legal = [&cfg, np]() {
      for (int i = 0; i < np; ++i) {
        const auto& e = cfg.assignments[static_cast<std::size_t>(i)];
        if (static_cast<int>(e.role) == forbidden_role_index(e.kind))
          return false;
      }
      return true;
    };
    auto move_train_legal = [&cfg, np]() {
      if (cfg.stage == Stage::S1) return true;
      for (int i = 0; i < np; ++i) {
        const auto& e = cfg.assignments[static_cast<std::size_t>(i)];
        if (static_cast<int>(e.movement) == forbidden_move_index(e.kind))
          return false;
      }
      return true;
    };
    auto multiset_locked = [&moves]() {
      std::vector<int> s = moves;
      std::sort(s.begin(), s.end());
      return s == std::vector<int>{0, 1, 2};
    };
    bool must_lock =
        movement_bijection_stage(cfg.stage) &&
        (m.split == Split::train || m.split == Split::dev ||
         movement_locked_in_eval(cfg.stage));
    if (must_lock && !multiset_locked())
      return fail("movement combination must be chasing/fleeing/stationary");

    switch (m.split) {
      case Split::train:
      case Split::dev:
        if (reserved) return fail("train/dev config uses a reserved kind set");
        if (!role_train_legal()) return fail("train/dev role is reserved");
        if (!move_train_legal()) return fail("train/dev movement is reserved");
        break;
      case Split::new_combo: {
        if (!reserved) return fail("unseen-combination kind set is not reserved");
        if (!role_train_legal() || !move_train_legal())
          return fail("unseen-combination config must reuse seen attributes");
        if (train_manifest != nullptr) {
          if (train_sets.count(set))
            return fail("kind set occurs in the train manifest");
          for (int i = 0; i < np; ++i) {
            const auto& e = cfg.assignments[static_cast<std::size_t>(i)];
            if (!train_triples.count(Triple{e.kind, static_cast<int>(e.role),
                                            static_cast<int>(e.movement)}))
              return fail("entity triple never occurs in the train manifest");
          }
        }
        break;
      }
      case Split::new_attr:
      case Split::new_all: {
        bool want_reserved = m.split == Split::new_all;
        if (reserved != want_reserved)
          return fail(want_reserved ? "kind set must be reserved"
                                    : "kind set must not be reserved");
        for (int i = 0; i < np; ++i) {
          const auto& e = cfg.assignments[static_cast<std::size_t>(i)];
          bool role_novel =
              static_cast<int>(e.role) == forbidden_role_index(e.kind);
          bool move_novel = cfg.stage != Stage::S1 &&
                            static_cast<int>(e.movement) ==
                                forbidden_move_index(e.kind);
          if (!role_novel && !move_novel)
            return fail("entity has no novel attribute");
        }
        if (train_manifest != nullptr && train_sets.count(set) &&
            m.split == Split::new_all)
          return fail("kind set occurs in the train manifest");
        break;
      }
    }
  }
  return "";
}

}  // namespace courier::env
