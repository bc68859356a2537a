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

#include "courier/text/text.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

namespace courier::text {

std::vector<SentenceEmbedding> SentenceEncoder::embed_manual(
    const env::Manual& m) const {
  if (m.sentences.empty()) throw ConfigError("embed_manual: empty manual");
  std::vector<SentenceEmbedding> out;
  out.reserve(m.sentences.size());
  for (const auto& s : m.sentences) {
    if (s.empty()) throw ConfigError("embed_manual: empty sentence");
    out.push_back(embed(s));
  }
  return out;
}

HashedEncoder::HashedEncoder(int d_enc) : d_enc_(d_enc) {
  if (d_enc <= 0) throw ConfigError("HashedEncoder: d_enc must be positive");
  salt_ = env::vocab_fingerprint();
}

std::string HashedEncoder::backend_id() const {
  return "fallback.v" + std::to_string(env::vocab_version()) + ".d" +
         std::to_string(d_enc_);
}

SentenceEmbedding HashedEncoder::embed(
    const std::vector<std::string>& tokens) const {
  SentenceEmbedding e;
  e.source = "fallback";
  e.vector.assign(static_cast<std::size_t>(d_enc_), 0.0);
  for (const auto& tok : tokens) {
    std::uint64_t h = fnv1a64(tok) ^ salt_;
    // Decorrelate bucket and sign bits.
    std::uint64_t s = h;
    h = splitmix64(s);
    std::size_t bucket = static_cast<std::size_t>(
        h % static_cast<std::uint64_t>(d_enc_));
    double sign = ((h >> 63) & 1ull) ? 1.0 : -1.0;
    e.vector[bucket] += sign;
  }
  double sq = 0.0;
  for (double v : e.vector) sq += v * v;
  if (sq > 0.0) {
    double inv = 1.0 / std::sqrt(sq);
    for (double& v : e.vector) v *= inv;
  } else {
    e.vector[0] = 1.0;
  }
  return e;
}

std::uint64_t sentence_key(const std::vector<std::string>& tokens) {
  std::string joined;
  for (const auto& t : tokens) {
    joined += t;
    joined += '\x1f';
  }
  return fnv1a64(joined);
}

namespace {

constexpr char kCacheMagic[4] = {'C', 'T', 'X', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void write_embedding_cache(const std::string& path, const EmbeddingCache& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kCacheMagic, 4);
  put(os, kCacheVersion);
  std::uint32_t blen = static_cast<std::uint32_t>(c.backend.size());
  put(os, blen);
  os.write(c.backend.data(), blen);
  put(os, static_cast<std::uint32_t>(c.d_enc));
  put(os, static_cast<std::uint64_t>(c.entries.size()));
  for (const auto& [key, vec] : c.entries) {
    if (static_cast<int>(vec.size()) != c.d_enc)
      throw ConfigError("cache entry dimension mismatch");
    put(os, key);
    os.write(reinterpret_cast<const char*>(vec.data()),
             static_cast<std::streamsize>(vec.size() * sizeof(double)));
  }
  if (!os) throw IoError("write failed: " + path);
}

EmbeddingCache read_embedding_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCacheMagic, 4) != 0)
    throw IoError("bad embedding cache magic in " + path);
  std::uint32_t version = 0;
  get(is, version);
  if (version != kCacheVersion)
    throw IoError("unsupported embedding cache version");
  std::uint32_t blen = 0;
  get(is, blen);
  EmbeddingCache c;
  c.backend.resize(blen);
  is.read(c.backend.data(), blen);
  std::uint32_t d = 0;
  get(is, d);
  c.d_enc = static_cast<int>(d);
  std::uint64_t count = 0;
  get(is, count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t key = 0;
    get(is, key);
    std::vector<double> vec(static_cast<std::size_t>(c.d_enc));
    is.read(reinterpret_cast<char*>(vec.data()),
            static_cast<std::streamsize>(vec.size() * sizeof(double)));
    c.entries.emplace(key, std::move(vec));
  }
  if (!is) throw IoError("truncated embedding cache: " + path);
  return c;
}

CachedEncoder::CachedEncoder(EmbeddingCache cache,
                             std::shared_ptr<SentenceEncoder> fallback)
    : cache_(std::move(cache)), fallback_(std::move(fallback)) {
  if (fallback_ && fallback_->dim() != cache_.d_enc)
    throw ConfigError("fallback dimension differs from cache dimension");
}

SentenceEmbedding CachedEncoder::embed(
    const std::vector<std::string>& tokens) const {
  auto it = cache_.entries.find(sentence_key(tokens));
  if (it != cache_.entries.end()) {
    SentenceEmbedding e;
    e.vector = it->second;
    e.source = "pretrained";
    return e;
  }
  if (!fallback_)
    throw ConfigError("sentence missing from embedding cache and fallback disabled");
  if (!warned_) {
    std::cerr << "[text] warning: cache miss, using fallback encoder\n";
    warned_ = true;
  }
  return fallback_->embed(tokens);
}

std::unique_ptr<SentenceEncoder> make_encoder(const std::string& backend,
                                              int d_enc,
                                              const std::string& cache_path,
                                              bool allow_fallback_on_miss) {
  if (backend == "fallback") return std::make_unique<HashedEncoder>(d_enc);
  if (backend == "pretrained") {
    if (cache_path.empty())
      throw ConfigError("pretrained backend requires text_cache path");
    EmbeddingCache cache = read_embedding_cache(cache_path);
    std::shared_ptr<SentenceEncoder> fb;
    if (allow_fallback_on_miss)
      fb = std::make_shared<HashedEncoder>(cache.d_enc);
    return std::make_unique<CachedEncoder>(std::move(cache), std::move(fb));
  }
  throw ConfigError("unknown text_backend: " + backend);
}

}  // namespace courier::text
