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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "courier/text/text.hpp"
#include "doctest.h"
#include "json.hpp"

namespace courier {
namespace {

using json = nlohmann::json;

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

const std::vector<std::vector<std::string>>& probe_sentences() {
  static const std::vector<std::vector<std::string>> s = {
      {"the", "wizard", "that", "chases", "you", "holds", "the", "message"},
      {"an", "airplane", "is", "fleeing", "and", "is", "the", "target"},
      {"the", "dangerous", "dog", "stays", "put"},
      {"single"},
  };
  return s;
}

TEST_SUITE_BEGIN("text");

TEST_CASE("hashed embeddings are unit norm, finite, and deterministic") {
  text::HashedEncoder enc(64);
  CHECK(enc.dim() == 64);
  for (const auto& tokens : probe_sentences()) {
    auto e1 = enc.embed(tokens);
    auto e2 = enc.embed(tokens);
    REQUIRE(static_cast<int>(e1.vector.size()) == 64);
    CHECK(e1.source == "fallback");
    double norm = 0;
    for (std::size_t i = 0; i < e1.vector.size(); ++i) {
      CHECK(std::isfinite(e1.vector[i]));
      CHECK(e1.vector[i] == e2.vector[i]);  // bitwise reproducible
      norm += e1.vector[i] * e1.vector[i];
    }
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-12);
  }
}

TEST_CASE("different sentences get different embeddings") {
  text::HashedEncoder enc(64);
  auto a = enc.embed(probe_sentences()[0]).vector;
  auto b = enc.embed(probe_sentences()[1]).vector;
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    diff = std::max(diff, std::abs(a[i] - b[i]));
  CHECK(diff > 1e-3);
}

TEST_CASE("embeddings match the checked-in golden values bit for bit") {
  // Guards the hashing scheme against accidental change: cached embeddings
  // and split fingerprints both assume stability across builds and machines.
  std::ifstream f("tests/data/text_golden.json");
  if (!f.good()) f.open("../tests/data/text_golden.json");
  REQUIRE_MESSAGE(f.good(), "golden file missing; run from the repo root");
  json golden = json::parse(f);
  text::HashedEncoder enc(golden.at("d_enc").get<int>());
  const auto& probes = probe_sentences();
  REQUIRE(golden.at("embeddings").size() == probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) {
    auto want = golden.at("embeddings")[i].get<std::vector<double>>();
    auto got = enc.embed(probes[i]).vector;
    REQUIRE(got.size() == want.size());
    for (std::size_t j = 0; j < got.size(); ++j) CHECK(got[j] == want[j]);
  }
}

TEST_CASE("manual embedding preserves sentence order") {
  env::Manual m;
  m.sentences = {probe_sentences()[0], probe_sentences()[1]};
  m.alignment = {1, 0};
  text::HashedEncoder enc(32);
  auto got = enc.embed_manual(m);
  REQUIRE(got.size() == 2);
  CHECK(got[0].vector == enc.embed(m.sentences[0]).vector);
  CHECK(got[1].vector == enc.embed(m.sentences[1]).vector);
}

TEST_CASE("cache round trip and cached encoder behavior") {
  text::HashedEncoder base(16);
  text::EmbeddingCache cache;
  cache.backend = "pretrained";
  cache.d_enc = 16;
  cache.entries[text::sentence_key(probe_sentences()[0])] =
      base.embed(probe_sentences()[0]).vector;

  std::string path = temp_path("courier_cache_test.bin");
  text::write_embedding_cache(path, cache);
  text::EmbeddingCache r = text::read_embedding_cache(path);
  CHECK(r.backend == cache.backend);
  CHECK(r.d_enc == 16);
  REQUIRE(r.entries.size() == 1);

  // Hit: served from the cache with the pretrained tag.
  text::CachedEncoder hit_only(r);
  auto e = hit_only.embed(probe_sentences()[0]);
  CHECK(e.source == "pretrained");
  CHECK(e.vector == cache.entries.begin()->second);
  // Miss without fallback: hard error.
  CHECK_THROWS_AS(hit_only.embed(probe_sentences()[1]), ConfigError);
  // Miss with fallback: served, tagged as fallback.
  text::CachedEncoder with_fb(r, std::make_shared<text::HashedEncoder>(16));
  auto fb = with_fb.embed(probe_sentences()[1]);
  CHECK(fb.source == "fallback");
  std::remove(path.c_str());
}

TEST_CASE("encoder factory wires up the advertised backends") {
  auto fb = text::make_encoder("fallback", 24, "", false);
  CHECK(fb->dim() == 24);
  CHECK(fb->backend_id().find("fallback") != std::string::npos);
  // The pretrained backend needs a cache file offline.
  CHECK_THROWS_AS(text::make_encoder("pretrained", 24, "", false),
                  ConfigError);
  CHECK_THROWS_AS(text::make_encoder("nonsense", 24, "", false), ConfigError);
}

TEST_SUITE_END();

}  // namespace
}  // namespace courier
