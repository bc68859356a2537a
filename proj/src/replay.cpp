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

#include "courier/replay/replay.hpp"

#include <algorithm>
#include <cmath>

#include "courier/io.hpp"

namespace courier::replay {

std::int64_t EpisodeRecord::return_class() const {
  return std::llround(2.0 * ret);
}

void EpisodeRecord::validate() const {
  std::size_t steps = actions.size();
  if (obs.size() != steps + 1 || rewards.size() != steps + 1 ||
      continues.size() != steps + 1)
    throw ConfigError("episode arrays disagree on length");
  if (steps == 0) throw ConfigError("episode has no steps");
  if (rewards[0] != 0.0)
    throw ConfigError("reward entering the first observation must be 0");
  double acc = 0.0;
  for (double r : rewards) acc += r;
  if (std::abs(acc - ret) > 1e-9)
    throw ConfigError("stored return does not match summed rewards");
  if (continues.back() != 0.0 && obs.back().t < static_cast<int>(steps))
    throw ConfigError("episode must end terminal or at horizon");
}

ReplayBuffer::ReplayBuffer(ReplayConfig cfg) : cfg_(cfg) {
  if (cfg_.capacity == 0) throw ConfigError("replay capacity must be > 0");
  if (cfg_.alpha < 0.0 || cfg_.alpha > 1.0)
    throw ConfigError("replay alpha must lie in [0, 1]");
}

std::uint64_t ReplayBuffer::add(EpisodeRecord episode) {
  episode.validate();
  episode.id = next_id_++;
  episode.insert_index = next_insert_++;
  if (episodes_.size() == cfg_.capacity) {
    const EpisodeRecord& old = episodes_.front();
    auto it = class_counts_.find(old.return_class());
    if (it != class_counts_.end() && --(it->second) == 0)
      class_counts_.erase(it);
    total_steps_ -= static_cast<std::uint64_t>(old.num_steps());
    episodes_.pop_front();
  }
  class_counts_[episode.return_class()]++;
  total_steps_ += static_cast<std::uint64_t>(episode.num_steps());
  std::uint64_t id = episode.id;
  episodes_.push_back(std::move(episode));
  return id;
}

std::size_t ReplayBuffer::class_count(std::int64_t cls) const {
  auto it = class_counts_.find(cls);
  return it == class_counts_.end() ? 0 : it->second;
}

double ReplayBuffer::class_weight(std::int64_t cls) const {
  if (episodes_.empty()) throw ConfigError("class_weight on empty buffer");
  std::size_t count = std::max<std::size_t>(class_count(cls), 1);
  return std::sqrt(static_cast<double>(episodes_.size()) /
                   static_cast<double>(count));
}

std::vector<double> ReplayBuffer::sampling_probs() const {
  std::size_t n = episodes_.size();
  if (n == 0) throw UsageError("sample from empty replay buffer");
  // Recency: weight 1/(1 + age_rank) with the newest episode at rank 0.
  std::vector<double> recency(n);
  double rec_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double w = 1.0 / (1.0 + static_cast<double>(n - 1 - i));
    recency[i] = w;
    rec_sum += w;
  }
  double err_sum = 0.0;
  for (const EpisodeRecord& e : episodes_) err_sum += e.priority;
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    double p = recency[i] / rec_sum;
    if (err_sum > 0.0 && cfg_.alpha > 0.0) {
      p = (1.0 - cfg_.alpha) * p +
          cfg_.alpha * (episodes_[i].priority / err_sum);
    }
    probs[i] = p;
  }
  return probs;
}

SegmentBatch ReplayBuffer::sample(int batch_size, int batch_length,
                                  Rng& rng) const {
  if (batch_size <= 0 || batch_length <= 0)
    throw UsageError("batch dimensions must be positive");
  std::vector<double> probs = sampling_probs();
  Eigen::Map<const Eigen::VectorXd> pview(probs.data(),
                                          static_cast<Eigen::Index>(probs.size()));

  SegmentBatch out;
  int B = batch_size, L = batch_length;
  out.actions = Eigen::MatrixXi::Constant(B, L, env::kNumActions - 1);
  out.rewards = Mat::Zero(B, L);
  out.continues = Mat::Zero(B, L);
  out.mask = Mat::Zero(B, L);
  for (int b = 0; b < B; ++b) {
    std::size_t pick = static_cast<std::size_t>(rng.categorical(pview));
    const EpisodeRecord& e = episodes_[pick];
    out.episodes.push_back(&e);
    out.episode_ids.push_back(e.id);
    out.class_weight.push_back(class_weight(e.return_class()));
    int real = std::min(L, e.num_steps() + 1);
    for (int t = 0; t < real; ++t) {
      // a_T is never taken; padding with "stay" keeps shapes rectangular.
      out.actions(b, t) =
          t < e.num_steps() ? e.actions[static_cast<std::size_t>(t)]
                            : env::kNumActions - 1;
      out.rewards(b, t) = e.rewards[static_cast<std::size_t>(t)];
      out.continues(b, t) = e.continues[static_cast<std::size_t>(t)];
      out.mask(b, t) = 1.0;
    }
    // Remaining columns stay terminal-absorbing: zero reward, zero continue,
    // zero mask.
  }
  return out;
}

void ReplayBuffer::update_priorities(const std::vector<std::uint64_t>& ids,
                                     const std::vector<double>& errors) {
  if (ids.size() != errors.size())
    throw UsageError("priority update arrays disagree on length");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double err = errors[i];
    if (!std::isfinite(err)) err = cfg_.error_clip;
    err = std::clamp(err, 0.0, cfg_.error_clip);
    for (EpisodeRecord& e : episodes_) {
      if (e.id == ids[i]) {
        e.priority = err;
        break;
      }
    }
  }
}

const EpisodeRecord* ReplayBuffer::find(std::uint64_t id) const {
  for (const EpisodeRecord& e : episodes_)
    if (e.id == id) return &e;
  return nullptr;
}

namespace {

constexpr std::uint32_t kMagic = 0x4c505243;  // "CRPL"
constexpr std::uint32_t kVersion = 1;

void write_episode(io::BinWriter& w, const EpisodeRecord& e) {
  w.u64(e.id);
  w.u64(e.insert_index);
  w.f64(e.ret);
  w.f64(e.priority);
  w.u32(static_cast<std::uint32_t>(e.actions.size()));
  for (int a : e.actions) w.i32(a);
  for (double r : e.rewards) w.f64(r);
  for (double c : e.continues) w.f64(c);
  for (const env::Observation& o : e.obs) {
    w.i32(o.grid_h);
    w.i32(o.grid_w);
    w.u32(static_cast<std::uint32_t>(o.grid_symbols.size()));
    for (int s : o.grid_symbols) w.i32(s);
    w.u32(static_cast<std::uint32_t>(o.tracks.size()));
    for (const env::TrackObs& tr : o.tracks) {
      w.i32(tr.track);
      w.i32(tr.symbol);
      w.i32(tr.pos.y);
      w.i32(tr.pos.x);
      w.u8(tr.alive ? 1 : 0);
    }
    w.i32(o.agent.y);
    w.i32(o.agent.x);
    w.u8(o.agent_alive ? 1 : 0);
    w.u8(o.has_message ? 1 : 0);
    w.i32(o.t);
  }
  w.mat(e.sentence_embeddings);
}

EpisodeRecord read_episode(io::BinReader& r) {
  EpisodeRecord e;
  e.id = r.u64();
  e.insert_index = r.u64();
  e.ret = r.f64();
  e.priority = r.f64();
  std::uint32_t steps = r.u32();
  e.actions.resize(steps);
  for (auto& a : e.actions) a = r.i32();
  e.rewards.resize(steps + 1);
  for (auto& x : e.rewards) x = r.f64();
  e.continues.resize(steps + 1);
  for (auto& x : e.continues) x = r.f64();
  e.obs.resize(steps + 1);
  for (env::Observation& o : e.obs) {
    o.grid_h = r.i32();
    o.grid_w = r.i32();
    o.grid_symbols.resize(r.u32());
    for (auto& s : o.grid_symbols) s = r.i32();
    o.tracks.resize(r.u32());
    for (env::TrackObs& tr : o.tracks) {
      tr.track = r.i32();
      tr.symbol = r.i32();
      tr.pos.y = r.i32();
      tr.pos.x = r.i32();
      tr.alive = r.u8() != 0;
    }
    o.agent.y = r.i32();
    o.agent.x = r.i32();
    o.agent_alive = r.u8() != 0;
    o.has_message = r.u8() != 0;
    o.t = r.i32();
  }
  e.sentence_embeddings = r.mat();
  return e;
}

}  // namespace

void ReplayBuffer::save(const std::string& path) const {
  io::BinWriter w(path);
  w.u32(kMagic);
  w.u32(kVersion);
  w.u64(next_id_);
  w.u64(next_insert_);
  w.u64(static_cast<std::uint64_t>(episodes_.size()));
  for (const EpisodeRecord& e : episodes_) write_episode(w, e);
  w.close();
}

void ReplayBuffer::load(const std::string& path) {
  io::BinReader r(path);
  if (r.u32() != kMagic) throw IoError("not a replay spill file: " + path);
  if (r.u32() != kVersion) throw IoError("unsupported replay version");
  next_id_ = r.u64();
  next_insert_ = r.u64();
  std::uint64_t n = r.u64();
  episodes_.clear();
  class_counts_.clear();
  total_steps_ = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    EpisodeRecord e = read_episode(r);
    e.validate();
    class_counts_[e.return_class()]++;
    total_steps_ += static_cast<std::uint64_t>(e.num_steps());
    episodes_.push_back(std::move(e));
  }
}

}  // namespace courier::replay
