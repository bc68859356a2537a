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

#include <cstdint>
#include <string>
#include <vector>

#include "courier/agent/agent.hpp"
#include "courier/env/splits.hpp"
#include "courier/led/encoder.hpp"
#include "courier/replay/replay.hpp"
#include "courier/wm/wm.hpp"

namespace courier::harness {

// Flat run configuration. Keys in config files use exactly these member
// names so published hyperparameter tables are copy-pasteable.
struct RunConfig {
  // Run identity.
  std::string stage = "s1";
  std::uint64_t seed = 0;
  std::int64_t env_steps = 1'000'000;

  // Optimization.
  int batch_size = 30;
  int batch_length = 300;
  double wm_lr = 3e-4;
  double wm_grad_norm = 30.0;
  double actor_lr = 2e-4;
  double actor_grad_norm = 100.0;
  double critic_lr = 1e-4;
  double critic_grad_norm = 100.0;

  // World-model loss.
  double beta_pred = 1.0;
  double beta_dyn = 1.0;
  double beta_rep = 0.1;
  double unimix = 0.01;
  double free_nats = 1.0;
  int pred_horizon = 8;
  double msl_lambda = 1.0;
  bool truncate_msl_grads = false;

  // Architecture.
  int d_s = 32;
  int d_sb = 32;
  int d = 128;
  int d_val = 128;
  int h_dim = 512;
  int d_enc = 256;
  int d_time = 32;
  int d_x = 512;
  int mlp_hidden = 512;
  int mlp_layers = 3;
  int cnn_c1 = 32;
  int cnn_c2 = 64;
  int z_groups = 32;
  int z_classes = 32;
  int reward_bins = 41;

  // Environment (N and H are fixed per stage and validated against it).
  int N = -1;
  int H = -1;
  double thres = -1.0;  // finetune threshold; <0 means not applicable
  int grid_h = 10;
  int grid_w = 10;

  // Replay.
  int replay_capacity = 4096;
  double replay_alpha = 0.5;
  double replay_error_clip = 100.0;

  // Behavior learning.
  double gamma = 0.997;
  double lambda = 0.95;
  double entropy = 3e-4;
  double action_unimix = 0.01;
  int imag_horizon = 15;
  double retnorm_decay = 0.99;
  int imag_batch = 64;

  // Loop schedule.
  int prefill = 16;              // episodes collected before updates begin
  int updates_per_episode = 1;   // world-model updates per collected episode
  int policy_updates_per_wm = 1;
  std::int64_t eval_every = 10'000;      // env steps between dev evaluations
  int eval_episodes = 100;               // dev evaluation episode count
  std::int64_t checkpoint_every = 50'000;
  int log_every = 25;                    // updates between train metric lines

  // Text encoder.
  std::string text_backend = "fallback";
  std::string embed_cache;

  // Finetune.
  int finetune_steps = 2000;
  int finetune_traj = 60;

  env::Stage stage_enum() const;
  void validate() const;  // throws ConfigError

  // Stage-table values unless explicitly set.
  int effective_N() const;
  int effective_H() const;
  double effective_thres() const;

  led::EncoderConfig encoder_config() const;
  wm::WmConfig wm_config() const;
  agent::AcConfig ac_config() const;
  replay::ReplayConfig replay_config() const;

  // Deterministic key=value dump (sorted keys), parseable by parse().
  std::string to_string() const;
};

// Parses `key = value` lines; '#' starts a comment. Unknown keys throw.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
// Applies "key=value" overrides on top of an existing config.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& kvs);

}  // namespace courier::harness
