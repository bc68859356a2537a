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

#include <vector>

#include "courier/env/env.hpp"
#include "courier/led/encoder.hpp"
#include "courier/nn/tape.hpp"
#include "courier/wm/wm.hpp"

namespace courier::agent {

using nn::Mat;

struct AcConfig {
  int horizon = 15;            // imagination length
  double gamma = 0.997;        // discount
  double lambda = 0.95;        // lambda-return mixing
  double entropy = 3e-4;       // entropy regularizer scale
  double action_unimix = 0.01; // uniform floor on the action distribution
  double actor_lr = 2e-4;
  double critic_lr = 1e-4;
  double grad_clip = 100.0;
  double retnorm_decay = 0.99; // EMA decay of the return percentile range
  int mlp_hidden = 512;
  int mlp_layers = 3;
  int value_bins = 41;
  double value_lo = -5.0;      // symlog space
  double value_hi = 5.0;
};

// Actor and critic heads over the model state [h, z_flat]. Both start at
// zero output: a uniform policy and a zero value estimate.
class ActorCritic {
 public:
  ActorCritic(const AcConfig& cfg, const wm::WmConfig& wm_cfg,
              nn::ParamStore& store, Rng& rng);

  const AcConfig& config() const { return cfg_; }

  nn::Var actor_logits(nn::Tape& t, nn::Var state) const;
  nn::Var critic_logits(nn::Tape& t, nn::Var state) const;

  // Mixed action probabilities with the uniform floor applied (rows x 5).
  Mat action_probs_rows(const Mat& h, const Mat& z_flat) const;
  // Decoded value estimates (rows).
  Eigen::VectorXd values_rows(const Mat& h, const Mat& z_flat) const;

  const wm::TwoHot& value_head() const { return value_two_hot_; }
  int state_dim() const { return state_dim_; }
  int num_actions() const { return num_actions_; }

 private:
  AcConfig cfg_;
  int state_dim_;
  int num_actions_;
  wm::TwoHot value_two_hot_;
  nn::Mlp actor_mlp_;
  nn::Mlp critic_mlp_;
};

// A value-level imagined rollout: states s_0..s_H, actions a_0..a_{H-1},
// and head outputs r_k / c_k for the state entered at step k (columns
// 0..H-1 hold k = 1..H). Policy gradients flow through log-probabilities
// recomputed at update time, not through the rollout.
struct ImaginedRollout {
  std::vector<Mat> h;       // H+1 entries, each B x h_dim
  std::vector<Mat> z;       // H+1 entries, each B x z_flat
  Eigen::MatrixXi actions;  // B x H
  Mat rewards;              // B x H, reward entering state k = col+1
  Mat continues;            // B x H, continue probability at state k = col+1
  int batch() const { return static_cast<int>(actions.rows()); }
  int horizon() const { return static_cast<int>(actions.cols()); }
};

// Rolls the world model forward under the actor from the given start
// latents. Stream forks: action at step k row b <- rng.fork("imag_act", k, b);
// next latent <- rng.fork("imag_z", k+1, b).
ImaginedRollout imagine(const wm::WorldModel& wm, const ActorCritic& ac,
                        const Mat& h0, const Mat& z0, int horizon, Rng& rng);

// lambda-returns R_k for k = 0..H-1 given values v(s_0..s_H):
// R_k = r_{k+1} + gamma * c_{k+1} * ((1-lambda) v_{k+1} + lambda R_{k+1}),
// with R_{H-1} bootstrapped by v_H.
Mat lambda_returns(const Mat& rewards, const Mat& continues,
                   const Mat& values, double gamma, double lambda);

struct PolicyLosses {
  double actor = 0.0;
  double critic = 0.0;
  double entropy = 0.0;   // mean policy entropy (nats)
  double ret_norm = 1.0;  // normalization actually applied to advantages
  double actor_grad_norm = 0.0;
  double critic_grad_norm = 0.0;
};

// One REINFORCE + two-hot-critic update on an imagined rollout. ret_range
// carries the EMA of the return percentile range across updates (pass 0 to
// start). World-model parameters are untouched: the optimizers own only
// actor/critic tensors and no gradient path reaches the rollout.
PolicyLosses policy_update(const ActorCritic& ac, const ImaginedRollout& ro,
                           nn::Adam& actor_opt, nn::Adam& critic_opt,
                           double& ret_range);

// Mean accumulated imagined reward over n_traj trajectories started from the
// posterior of a single observation. Reward k carries the probability that
// the trajectory is still running: prod_{j<k} c_j.
double estimate_return(const wm::WorldModel& wm, const ActorCritic& ac,
                       const led::Encoder& enc, const Mat& sentence_embeddings,
                       const env::Observation& obs0, int horizon, int n_traj,
                       Rng& rng);

struct FinetuneStats {
  double v_hat = 0.0;        // pre-finetune estimate
  bool early_exit = false;
  int steps_run = 0;
  std::int64_t trajectories_generated = 0;  // excludes the estimate itself
};

struct FinetuneConfig {
  int steps = 2000;
  int traj_per_step = 60;
  int horizon = 32;  // game length
};

// Algorithm: estimate the return from obs0; if it clears the threshold the
// policy is returned untouched, otherwise run `steps` updates, each on
// `traj_per_step` freshly imagined trajectories from the posterior of obs0.
// Only actor/critic parameters move.
FinetuneStats finetune(const wm::WorldModel& wm, const ActorCritic& ac,
                       const led::Encoder& enc, const Mat& sentence_embeddings,
                       const env::Observation& obs0, double thres,
                       const FinetuneConfig& fcfg, nn::ParamStore& store,
                       Rng& rng);

// Online driver for acting in the real environment: keeps the recurrent
// state and the temporal array in sync with a running episode.
class PolicyRuntime {
 public:
  PolicyRuntime(const led::Encoder* enc, const wm::WorldModel* wm,
                const ActorCritic* ac, Mat sentence_embeddings);

  void reset();

  // Consumes the observation for the current step and returns the action.
  // greedy picks the argmax; otherwise samples from the mixed distribution
  // using stream.fork("act", t).
  int act(const env::Observation& obs, bool greedy, const Rng& stream);

  const Mat& recurrent_state() const { return h_; }
  const Mat& latent() const { return z_; }

 private:
  const led::Encoder* enc_;
  const wm::WorldModel* wm_;
  const ActorCritic* ac_;
  Mat sent_emb_;
  Mat h_;
  Mat z_;
  led::TemporalArray temporal_;
  env::Observation prev_obs_;
  bool has_prev_ = false;
};

}  // namespace courier::agent
