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
#include <optional>
#include <string>
#include <vector>

#include "courier/agent/agent.hpp"
#include "courier/env/splits.hpp"
#include "courier/harness/checkpoint.hpp"
#include "courier/harness/config.hpp"
#include "courier/harness/metrics.hpp"
#include "courier/replay/replay.hpp"
#include "courier/text/text.hpp"

namespace courier::harness {

using nn::Mat;

// Encoder, world model, and policy sharing one parameter store, built
// deterministically from a config (parameters depend only on cfg.seed).
struct Models {
  explicit Models(const RunConfig& config);

  Mat manual_embeddings(const env::Manual& m) const;

  RunConfig cfg;
  nn::ParamStore store;
  std::unique_ptr<led::Encoder> enc;
  std::unique_ptr<wm::WorldModel> wm;
  std::unique_ptr<agent::ActorCritic> ac;
  std::unique_ptr<text::SentenceEncoder> text;
};

struct RolloutResult {
  replay::EpisodeRecord record;
  bool won = false;
  double ret = 0.0;
};

// Plays one episode in the real environment under the current policy.
// `stream` seeds latent sampling and (when not greedy) action sampling.
RolloutResult run_episode(Models& m, const env::GameConfig& game,
                          std::uint64_t game_seed, const Rng& stream,
                          bool greedy);

// Fraction of evaluation episodes won. Episode i plays game (i % games) at
// trial (i / games); seeds derive from (manifest seed, game, trial).
double eval_win_rate(Models& m, const env::SplitManifest& manifest,
                     int episodes);

struct EvalScores {
  std::vector<std::vector<double>> by_game;  // games x trials returns
  double mean = 0.0;       // mean over games of per-game trial means
  double win_rate = 0.0;   // fraction of all episodes won
};

EvalScores eval_avg_scores(Models& m, const env::SplitManifest& manifest,
                           int trials, int max_games);

struct WmUpdateStats {
  double total = 0.0, pred = 0.0, dyn = 0.0, rep = 0.0, grad_norm = 0.0;
  std::vector<Mat> x_values;  // B entries, L x d_x (for policy start states)
  Eigen::MatrixXi actions;
  Mat mask;
};

// Orchestrates collection, replay, world-model updates, policy updates in
// imagination, periodic dev evaluation, and checkpointing. All randomness
// forks off counters, so a resumed run continues the exact stream.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, env::SplitManifest train_manifest,
          std::optional<env::SplitManifest> dev_manifest,
          std::string out_dir);

  // Restores parameters, counters, optimizer clocks, and the replay spill.
  void resume_from(const std::string& ckpt_path);

  // Runs until the env-step budget is exhausted; writes metrics and
  // checkpoints under out_dir.
  void run();

  // Single-step entry points (used by run() and by tests).
  RolloutResult collect_one();
  WmUpdateStats wm_update();
  agent::PolicyLosses policy_update_once(const WmUpdateStats& stats);
  double evaluate_dev();
  std::string save_now();  // returns checkpoint path

  Models& models() { return models_; }
  replay::ReplayBuffer& replay() { return replay_; }
  const TrainCounters& counters() const { return counters_; }

 private:
  void maybe_eval_and_checkpoint();

  RunConfig cfg_;
  Models models_;
  env::SplitManifest train_manifest_;
  std::optional<env::SplitManifest> dev_manifest_;
  std::string out_dir_;
  replay::ReplayBuffer replay_;
  nn::Adam wm_opt_;
  nn::Adam actor_opt_;
  nn::Adam critic_opt_;
  TrainCounters counters_;
  MetricsWriter metrics_;
  Rng root_;
};

}  // namespace courier::harness
