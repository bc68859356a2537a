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

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "courier/common.hpp"
#include "courier/env/env.hpp"

namespace courier::text {

struct SentenceEmbedding {
  std::vector<double> vector;  // length d_enc; finite
  std::string source;          // "pretrained" or "fallback"
};

// Frozen sentence encoder. Embeddings are plain values (never tape nodes), so
// no gradient can reach them; the learned projection lives in the observation
// encoder's parameters.
class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual int dim() const = 0;
  virtual std::string backend_id() const = 0;
  virtual SentenceEmbedding embed(
      const std::vector<std::string>& tokens) const = 0;

  // One embedding per manual sentence, in manual order.
  std::vector<SentenceEmbedding> embed_manual(const env::Manual& m) const;
};

// Deterministic offline fallback: signed feature hashing of the token bag,
// L2-normalized. Avoids transcendental functions so outputs are bit-identical
// across machines for a fixed vocabulary version.
class HashedEncoder : public SentenceEncoder {
 public:
  explicit HashedEncoder(int d_enc);
  int dim() const override { return d_enc_; }
  std::string backend_id() const override;
  SentenceEmbedding embed(
      const std::vector<std::string>& tokens) const override;

 private:
  int d_enc_;
  std::uint64_t salt_;
};

// ---- Embedding cache -----------------------------------------------------------
// Binary, versioned: precomputed embeddings keyed by hashed token sequence.
// This carries outputs of a real pretrained encoder into offline runs.

std::uint64_t sentence_key(const std::vector<std::string>& tokens);

struct EmbeddingCache {
  std::string backend;
  int d_enc = 0;
  std::unordered_map<std::uint64_t, std::vector<double>> entries;
};

void write_embedding_cache(const std::string& path, const EmbeddingCache& c);
EmbeddingCache read_embedding_cache(const std::string& path);

// Serves embeddings from a cache file. Missing sentences throw unless a
// fallback encoder is supplied explicitly, in which case the first miss logs
// a warning to stderr.
class CachedEncoder : public SentenceEncoder {
 public:
  CachedEncoder(EmbeddingCache cache,
                std::shared_ptr<SentenceEncoder> fallback = nullptr);
  int dim() const override { return cache_.d_enc; }
  std::string backend_id() const override { return cache_.backend; }
  SentenceEmbedding embed(
      const std::vector<std::string>& tokens) const override;

 private:
  EmbeddingCache cache_;
  std::shared_ptr<SentenceEncoder> fallback_;
  mutable bool warned_ = false;
};

// backend: "fallback" for the hashed encoder, "pretrained" for cache-backed
// (cache_path required; misses fall back only when allow_fallback_on_miss).
std::unique_ptr<SentenceEncoder> make_encoder(const std::string& backend,
                                              int d_enc,
                                              const std::string& cache_path,
                                              bool allow_fallback_on_miss);

}  // namespace courier::text
