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

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "courier/common.hpp"
#include "courier/env/env.hpp"

namespace courier::replay {

using Mat = Eigen::MatrixXd;

// One finished episode. Arrays follow the shared timing convention:
// observations o_0..o_T; action a_t taken at o_t (T entries); r_t is the
// reward received entering o_t (so r_0 = 0); cont_t is 0 exactly at a
// terminal observation.
struct EpisodeRecord {
  std::uint64_t id = 0;
  std::uint64_t insert_index = 0;
  std::vector<env::Observation> obs;  // T+1
  std::vector<int> actions;           // T
  std::vector<double> rewards;        // T+1
  std::vector<double> continues;      // T+1
  Mat sentence_embeddings;            // sentences x d_enc, fixed per episode
  double ret = 0.0;                   // accumulated return, Σ_t r_t
  double priority = 0.0;              // adversarial term (clamped wm error)

  // Return class key: returns are multiples of 0.5, so 2x the return indexes
  // classes exactly.
  std::int64_t return_class() const;

  int num_steps() const { return static_cast<int>(actions.size()); }
  void validate() const;  // throws ConfigError on shape/accounting mismatch
};

struct ReplayConfig {
  std::size_t capacity = 4096;  // episodes
  double alpha = 0.5;           // adversarial share of the sampling mixture
  double error_clip = 100.0;    // keeps priorities finite under blowups
};

// A sampled batch: one episode per row, truncated or padded to a fixed
// length. Padding repeats the final observation with zero reward and zero
// continue flag and is masked out of losses.
struct SegmentBatch {
  std::vector<const EpisodeRecord*> episodes;  // B, owned by the buffer
  Eigen::MatrixXi actions;                     // B x L
  Mat rewards;                                 // B x L
  Mat continues;                               // B x L
  Mat mask;                                    // B x L, 0 on padding
  std::vector<double> class_weight;            // B
  std::vector<std::uint64_t> episode_ids;      // B
};

// Episodic storage with prioritized sampling. Newest-first recency weights
// mix with normalized world-model prediction error; loss weights balance
// return classes by inverse square-root frequency.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(ReplayConfig cfg = {});

  // Stores a finished episode (evicting the oldest at capacity) and returns
  // its id.
  std::uint64_t add(EpisodeRecord episode);

  std::size_t size() const { return episodes_.size(); }
  std::uint64_t total_steps() const { return total_steps_; }
  const ReplayConfig& config() const { return cfg_; }

  std::size_t class_count(std::int64_t cls) const;
  // sqrt(|RB| / count(cls)); an unseen class counts as 1.
  double class_weight(std::int64_t cls) const;

  // Sampling distribution over stored episodes, newest-last ordering
  // matching episode(i). Mixture: (1-alpha) * recency + alpha * normalized
  // adversarial error; the adversarial component falls away while all
  // errors are zero.
  std::vector<double> sampling_probs() const;

  SegmentBatch sample(int batch_size, int batch_length, Rng& rng) const;

  // priority <- clamp(error, 0, error_clip) per episode; unknown ids are
  // ignored (the episode was evicted).
  void update_priorities(const std::vector<std::uint64_t>& ids,
                         const std::vector<double>& errors);

  const EpisodeRecord& episode(std::size_t i) const { return episodes_[i]; }
  const EpisodeRecord* find(std::uint64_t id) const;

  // Spill format for checkpointing; restores ids, order, and priorities.
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  ReplayConfig cfg_;
  std::deque<EpisodeRecord> episodes_;  // oldest first
  std::map<std::int64_t, std::size_t> class_counts_;
  std::uint64_t next_id_ = 1;
  std::uint64_t next_insert_ = 0;
  std::uint64_t total_steps_ = 0;
};

}  // namespace courier::replay
