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
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "courier/common.hpp"
#include "courier/replay/replay.hpp"
#include "doctest.h"

namespace courier {
namespace {

using replay::EpisodeRecord;
using replay::ReplayBuffer;
using replay::ReplayConfig;
using replay::SegmentBatch;

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// A synthetic but fully valid episode: `steps` transitions, all reward paid
// on the final step so `ret` lands exactly on the requested value.
EpisodeRecord make_episode(int steps, double ret, bool terminal = true,
                           std::uint64_t salt = 0) {
  EpisodeRecord e;
  Rng rng(900 + salt);
  for (int t = 0; t <= steps; ++t) {
    env::Observation o;
    o.grid_h = 3;
    o.grid_w = 3;
    o.grid_symbols.assign(9, 0);
    o.grid_symbols[static_cast<std::size_t>(t % 9)] =
        1 + static_cast<int>(rng.uniform_int(12));
    env::TrackObs tr;
    tr.track = 0;
    tr.symbol = 1 + t % 12;
    tr.pos = {t % 3, (t + 1) % 3};
    tr.alive = t < steps;
    o.tracks = {tr};
    o.agent = {t % 3, t % 3};
    o.agent_alive = true;
    o.has_message = t > steps / 2;
    o.t = t;
    e.obs.push_back(o);
  }
  for (int t = 0; t < steps; ++t)
    e.actions.push_back(static_cast<int>(rng.uniform_int(env::kNumActions)));
  e.rewards.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  e.rewards.back() = ret;
  e.continues.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  if (terminal) e.continues.back() = 0.0;
  e.ret = ret;
  e.sentence_embeddings = Eigen::MatrixXd::Random(3, 8);
  return e;
}

ReplayBuffer filled_buffer(const ReplayConfig& cfg, int n) {
  ReplayBuffer rb(cfg);
  for (int i = 0; i < n; ++i)
    rb.add(make_episode(3 + i % 4, 0.5 * (i % 4), true,
                        static_cast<std::uint64_t>(i)));
  return rb;
}

TEST_SUITE_BEGIN("replay");

TEST_CASE("loss weights balance return classes by inverse sqrt frequency") {
  ReplayBuffer rb({.capacity = 64, .alpha = 0.0});
  // 12 episodes of return 0, 3 of return 0.5, 1 of return 1.5.
  std::map<std::int64_t, int> expect;
  for (int i = 0; i < 12; ++i) rb.add(make_episode(4, 0.0));
  for (int i = 0; i < 3; ++i) rb.add(make_episode(4, 0.5));
  rb.add(make_episode(4, 1.5));
  expect[0] = 12;
  expect[1] = 3;
  expect[3] = 1;

  REQUIRE(rb.size() == 16);
  for (const auto& [cls, count] : expect) {
    CHECK(rb.class_count(cls) == static_cast<std::size_t>(count));
    CHECK(rb.class_weight(cls) == std::sqrt(16.0 / count));
  }
  // Unseen classes count as one episode.
  CHECK(rb.class_count(-2) == 0);
  CHECK(rb.class_weight(-2) == std::sqrt(16.0));
  // The return class is twice the return, exactly.
  CHECK(make_episode(4, -1.0).return_class() == -2);
  CHECK(make_episode(4, 1.5).return_class() == 3);
}

TEST_CASE("sampling distribution is a simplex") {
  for (double alpha : {0.0, 0.3, 1.0}) {
    ReplayBuffer rb = filled_buffer({.capacity = 32, .alpha = alpha}, 9);
    std::vector<std::uint64_t> ids;
    std::vector<double> errs;
    for (std::size_t i = 0; i < rb.size(); ++i) {
      ids.push_back(rb.episode(i).id);
      errs.push_back(0.25 * static_cast<double>(i));
    }
    rb.update_priorities(ids, errs);
    std::vector<double> p = rb.sampling_probs();
    REQUIRE(p.size() == rb.size());
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("pure adversarial sampling follows normalized errors") {
  ReplayBuffer rb = filled_buffer({.capacity = 32, .alpha = 1.0}, 4);
  std::vector<std::uint64_t> ids;
  for (std::size_t i = 0; i < rb.size(); ++i)
    ids.push_back(rb.episode(i).id);

  SUBCASE("equal errors give the uniform distribution") {
    rb.update_priorities(ids, {2.0, 2.0, 2.0, 2.0});
    for (double p : rb.sampling_probs())
      CHECK(p == doctest::Approx(0.25).epsilon(1e-12));

    // And the sampler actually draws from it: 4000 picks, 3 sigma margin.
    Rng rng(41);
    std::map<std::uint64_t, int> hits;
    for (int i = 0; i < 1000; ++i) {
      SegmentBatch batch = rb.sample(4, 5, rng);
      for (std::uint64_t id : batch.episode_ids) hits[id]++;
    }
    double sigma = std::sqrt(0.25 * 0.75 / 4000.0);
    for (std::uint64_t id : ids)
      CHECK(std::abs(hits[id] / 4000.0 - 0.25) < 3 * sigma);
  }

  SUBCASE("a tenfold error is sampled tenfold") {
    rb.update_priorities(ids, {1.0, 1.0, 10.0, 1.0});
    std::vector<double> p = rb.sampling_probs();
    CHECK(p[2] == doctest::Approx(10.0 / 13.0).epsilon(1e-12));
    CHECK(p[0] == doctest::Approx(1.0 / 13.0).epsilon(1e-12));
    CHECK(p[2] / p[0] == doctest::Approx(10.0).epsilon(1e-12));

    Rng rng(42);
    int heavy = 0, total = 0;
    for (int i = 0; i < 1500; ++i) {
      SegmentBatch batch = rb.sample(2, 5, rng);
      for (std::uint64_t id : batch.episode_ids) {
        heavy += id == ids[2] ? 1 : 0;
        ++total;
      }
    }
    double frac = static_cast<double>(heavy) / total;
    CHECK(std::abs(frac - 10.0 / 13.0) < 0.05);
  }

  SUBCASE("scaling all errors leaves the distribution unchanged") {
    rb.update_priorities(ids, {0.5, 1.5, 2.5, 3.5});
    std::vector<double> before = rb.sampling_probs();
    rb.update_priorities(ids, {1.0, 3.0, 5.0, 7.0});
    std::vector<double> after = rb.sampling_probs();
    for (std::size_t i = 0; i < before.size(); ++i)
      CHECK(before[i] == doctest::Approx(after[i]).epsilon(1e-12));
  }
}

TEST_CASE("recency weighting prefers the newest episode") {
  // With no error signal the adversarial share falls away regardless of
  // alpha, leaving the pure recency law 1/(1 + age).
  ReplayBuffer rb = filled_buffer({.capacity = 32, .alpha = 0.5}, 6);
  std::vector<double> p = rb.sampling_probs();
  double norm = 0.0;
  for (int age = 0; age < 6; ++age) norm += 1.0 / (1.0 + age);
  for (std::size_t i = 0; i < 6; ++i) {
    double age = static_cast<double>(6 - 1 - i);
    CHECK(p[i] == doctest::Approx((1.0 / (1.0 + age)) / norm).epsilon(1e-12));
  }
  CHECK(p.back() == *std::max_element(p.begin(), p.end()));

  // A nonzero error mixes the two shares: (1-alpha) recency + alpha error.
  std::vector<std::uint64_t> ids;
  for (std::size_t i = 0; i < rb.size(); ++i)
    ids.push_back(rb.episode(i).id);
  rb.update_priorities(ids, {1.0, 1.0, 1.0, 1.0, 1.0, 1.0});
  std::vector<double> mixed = rb.sampling_probs();
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(mixed[i] ==
          doctest::Approx(0.5 * p[i] + 0.5 / 6.0).epsilon(1e-12));
}

TEST_CASE("priorities are clamped and survive unknown ids") {
  ReplayBuffer rb = filled_buffer({.capacity = 8, .alpha = 1.0,
                                   .error_clip = 100.0},
                                  3);
  std::vector<std::uint64_t> ids;
  for (std::size_t i = 0; i < rb.size(); ++i)
    ids.push_back(rb.episode(i).id);

  rb.update_priorities(ids, {1e12, -4.0,
                             std::numeric_limits<double>::infinity()});
  CHECK(rb.find(ids[0])->priority == 100.0);
  CHECK(rb.find(ids[1])->priority == 0.0);
  CHECK(rb.find(ids[2])->priority == 100.0);

  rb.update_priorities({ids[0]},
                       {std::numeric_limits<double>::quiet_NaN()});
  CHECK(rb.find(ids[0])->priority == 100.0);

  // An evicted or never-issued id is skipped without complaint.
  rb.update_priorities({9999}, {5.0});
  CHECK(rb.find(9999) == nullptr);
  for (double p : rb.sampling_probs()) CHECK(std::isfinite(p));

  CHECK_THROWS_AS(rb.update_priorities({1, 2}, {0.0}), UsageError);
}

TEST_CASE("segments pad with absorbing terminal columns and stay action") {
  ReplayBuffer rb({.capacity = 8, .alpha = 0.0});
  EpisodeRecord e = make_episode(3, 1.5);  // obs 0..3, actions 0..2
  std::vector<int> acts = e.actions;
  std::vector<double> rews = e.rewards;
  rb.add(std::move(e));

  Rng rng(7);
  SegmentBatch batch = rb.sample(2, 6, rng);
  REQUIRE(batch.actions.rows() == 2);
  REQUIRE(batch.actions.cols() == 6);
  for (int b = 0; b < 2; ++b) {
    // Real columns t = 0..3 (T+1 observations).
    for (int t = 0; t < 4; ++t) {
      CHECK(batch.mask(b, t) == 1.0);
      CHECK(batch.rewards(b, t) == rews[static_cast<std::size_t>(t)]);
      if (t < 3)
        CHECK(batch.actions(b, t) == acts[static_cast<std::size_t>(t)]);
    }
    // The slot after the last action and all padding use "stay".
    CHECK(batch.actions(b, 3) == env::kNumActions - 1);
    CHECK(batch.continues(b, 3) == 0.0);  // terminal observation
    for (int t = 4; t < 6; ++t) {
      CHECK(batch.mask(b, t) == 0.0);
      CHECK(batch.rewards(b, t) == 0.0);
      CHECK(batch.continues(b, t) == 0.0);
      CHECK(batch.actions(b, t) == env::kNumActions - 1);
    }
    CHECK(batch.class_weight[static_cast<std::size_t>(b)] ==
          rb.class_weight(3));
  }

  // A shorter window truncates instead.
  SegmentBatch cut = rb.sample(1, 2, rng);
  CHECK(cut.mask.row(0).sum() == 2.0);
  CHECK(cut.actions(0, 0) == acts[0]);
  CHECK(cut.actions(0, 1) == acts[1]);
  CHECK(cut.continues(0, 1) == 1.0);  // window ended before the terminal
}

TEST_CASE("sampling is reproducible from the stream") {
  ReplayBuffer rb = filled_buffer({.capacity = 32, .alpha = 0.5}, 7);
  Rng a(123), b(123);
  SegmentBatch s1 = rb.sample(5, 8, a);
  SegmentBatch s2 = rb.sample(5, 8, b);
  CHECK(s1.episode_ids == s2.episode_ids);
  CHECK(s1.actions == s2.actions);
  CHECK(s1.rewards == s2.rewards);
  CHECK(s1.mask == s2.mask);
}

TEST_CASE("episode validation rejects inconsistent records") {
  CHECK_NOTHROW(make_episode(4, 1.5).validate());

  EpisodeRecord bad = make_episode(4, 1.5);
  bad.actions.pop_back();
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = make_episode(4, 1.5);
  bad.rewards[0] = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = make_episode(4, 1.5);
  bad.ret = 1.0;  // no longer matches the summed rewards
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = make_episode(4, 1.5);
  bad.obs.clear();
  bad.actions.clear();
  bad.rewards.assign(1, 0.0);
  bad.continues.assign(1, 0.0);
  bad.obs.push_back(env::Observation{});
  bad.ret = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);  // zero steps

  // Ending non-terminal is only legal at the horizon.
  EpisodeRecord horizon = make_episode(4, 0.0, /*terminal=*/false);
  CHECK_NOTHROW(horizon.validate());  // obs.back().t == steps
  horizon.obs.back().t = 2;
  CHECK_THROWS_AS(horizon.validate(), ConfigError);
}

TEST_CASE("construction validates its configuration") {
  CHECK_THROWS_AS(ReplayBuffer({.capacity = 0}), ConfigError);
  CHECK_THROWS_AS(ReplayBuffer({.capacity = 4, .alpha = -0.1}), ConfigError);
  CHECK_THROWS_AS(ReplayBuffer({.capacity = 4, .alpha = 1.5}), ConfigError);

  ReplayBuffer empty({.capacity = 4});
  CHECK_THROWS_AS(empty.sampling_probs(), UsageError);
  Rng rng(1);
  CHECK_THROWS_AS(empty.sample(1, 1, rng), UsageError);
  CHECK_THROWS_AS(empty.class_weight(0), ConfigError);

  ReplayBuffer rb = filled_buffer({.capacity = 4}, 1);
  CHECK_THROWS_AS(rb.sample(0, 4, rng), UsageError);
  CHECK_THROWS_AS(rb.sample(4, 0, rng), UsageError);
}

TEST_CASE("capacity evicts the oldest episode and its accounting") {
  ReplayBuffer rb({.capacity = 3, .alpha = 0.0});
  std::uint64_t first = rb.add(make_episode(2, 0.0));
  rb.add(make_episode(3, 0.0));
  rb.add(make_episode(4, 0.5));
  CHECK(rb.total_steps() == 9);
  REQUIRE(rb.size() == 3);

  std::uint64_t fourth = rb.add(make_episode(5, 1.5));
  CHECK(rb.size() == 3);
  CHECK(rb.find(first) == nullptr);
  CHECK(rb.find(fourth) != nullptr);
  CHECK(rb.total_steps() == 12);  // 3 + 4 + 5
  CHECK(rb.class_count(0) == 1);  // the return-0 episode of length 2 left
  CHECK(rb.class_count(1) == 1);
  CHECK(rb.class_count(3) == 1);
  // Ids keep increasing; insertion order is preserved oldest-first.
  CHECK(rb.episode(0).id < rb.episode(1).id);
  CHECK(rb.episode(1).id < rb.episode(2).id);
}

TEST_CASE("spill files restore the buffer bit for bit") {
  std::string p1 = temp_path("courier_replay_a.bin");
  std::string p2 = temp_path("courier_replay_b.bin");

  ReplayBuffer rb = filled_buffer({.capacity = 8, .alpha = 0.7}, 5);
  std::vector<std::uint64_t> ids;
  std::vector<double> errs;
  for (std::size_t i = 0; i < rb.size(); ++i) {
    ids.push_back(rb.episode(i).id);
    errs.push_back(1.0 + static_cast<double>(i));
  }
  rb.update_priorities(ids, errs);
  rb.save(p1);

  ReplayBuffer back({.capacity = 8, .alpha = 0.7});
  back.load(p1);
  REQUIRE(back.size() == rb.size());
  CHECK(back.total_steps() == rb.total_steps());
  for (std::size_t i = 0; i < rb.size(); ++i) {
    const EpisodeRecord& a = rb.episode(i);
    const EpisodeRecord& b = back.episode(i);
    CHECK(a.id == b.id);
    CHECK(a.insert_index == b.insert_index);
    CHECK(a.ret == b.ret);
    CHECK(a.priority == b.priority);
    CHECK(a.actions == b.actions);
    CHECK(a.rewards == b.rewards);
    CHECK(a.continues == b.continues);
    CHECK(a.sentence_embeddings == b.sentence_embeddings);
    REQUIRE(a.obs.size() == b.obs.size());
    for (std::size_t t = 0; t < a.obs.size(); ++t) {
      CHECK(a.obs[t].grid_symbols == b.obs[t].grid_symbols);
      CHECK(a.obs[t].agent == b.obs[t].agent);
      CHECK(a.obs[t].has_message == b.obs[t].has_message);
      CHECK(a.obs[t].t == b.obs[t].t);
      REQUIRE(a.obs[t].tracks.size() == b.obs[t].tracks.size());
      for (std::size_t k = 0; k < a.obs[t].tracks.size(); ++k) {
        CHECK(a.obs[t].tracks[k].symbol == b.obs[t].tracks[k].symbol);
        CHECK(a.obs[t].tracks[k].pos == b.obs[t].tracks[k].pos);
        CHECK(a.obs[t].tracks[k].alive == b.obs[t].tracks[k].alive);
      }
    }
  }
  // Saving the restored buffer reproduces the file byte for byte.
  back.save(p2);
  CHECK(slurp(p1) == slurp(p2));

  // Sampling and class weights behave identically after the round trip.
  CHECK(rb.sampling_probs() == back.sampling_probs());
  Rng ra(5), rc(5);
  CHECK(rb.sample(3, 6, ra).episode_ids == back.sample(3, 6, rc).episode_ids);

  // Fresh ids continue where the saved counter left off.
  std::uint64_t next = back.add(make_episode(2, 0.0));
  CHECK(next > ids.back());

  // Corrupt magic is rejected.
  {
    std::ofstream out(p2, std::ios::binary | std::ios::trunc);
    out << "not a spill";
  }
  ReplayBuffer fresh({.capacity = 8});
  CHECK_THROWS_AS(fresh.load(p2), IoError);

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_SUITE_END();

}  // namespace
}  // namespace courier
