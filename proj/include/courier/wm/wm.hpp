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

#include "courier/nn/tape.hpp"

namespace courier::wm {

double symlog(double x);
double symexp(double x);

// Discretized regression head over symlog-transformed targets: targets become
// a two-hot weighting of the bracketing bins, trained by cross entropy, and
// predictions decode as symexp of the probability-weighted bin average.
struct TwoHot {
  int bins = 41;
  double lo = -5.0;  // in symlog space
  double hi = 5.0;

  double center(int i) const;
  nn::Mat targets(const nn::Mat& values) const;  // (R x 1) -> (R x bins)
  double decode(const Eigen::RowVectorXd& probs) const;
};

struct WmConfig {
  int d_x = 512;        // encoder feature width
  int h_dim = 512;      // deterministic state width
  int z_groups = 32;
  int z_classes = 32;
  int num_actions = 5;
  int mlp_hidden = 512;
  int mlp_layers = 3;
  double unimix = 0.01;
  double free_nats = 1.0;
  double beta_pred = 1.0;
  double beta_dyn = 1.0;
  double beta_rep = 0.1;
  double msl_lambda = 1.0;   // per-step decay of the open-loop term
  int pred_horizon = 8;      // posterior step plus pred_horizon-1 imagined
  bool truncate_msl_grads = false;
  bool mean_latent = false;  // use probabilities instead of samples (smooth)
  int reward_bins = 41;
  double reward_lo = -5.0;
  double reward_hi = 5.0;

  int z_flat() const { return z_groups * z_classes; }
};

// One training batch: B sequences of equal padded length T sharing a tape.
struct WmBatch {
  std::vector<nn::Var> x;           // B entries, each T x d_x
  Eigen::MatrixXi actions;          // B x T, action taken at step t
  nn::Mat rewards;                  // B x T, reward received entering step t
  nn::Mat continues;                // B x T, 0 exactly at terminal steps
  nn::Mat mask;                     // B x T, 0 on padding
  std::vector<double> class_weight; // B
  std::vector<std::uint64_t> episode_ids;  // B
};

struct WmLossOut {
  nn::Var total;
  nn::Var pred, dyn, rep;          // unscaled components (scalars)
  double total_v = 0, pred_v = 0, dyn_v = 0, rep_v = 0;
  std::vector<double> reward_nll;  // per sequence: masked mean single-step NLL
};

class WorldModel {
 public:
  WorldModel(const WmConfig& cfg, nn::ParamStore& store, Rng& rng);

  const WmConfig& config() const { return cfg_; }

  // Graph-building pieces (rows = batch).
  nn::Var sequence_step(nn::Tape& t, nn::Var h, nn::Var z_flat,
                        nn::Var a_onehot) const;
  nn::Var prior_logits(nn::Tape& t, nn::Var h) const;
  nn::Var posterior_logits(nn::Tape& t, nn::Var h, nn::Var x) const;
  // (R x G*C) logits -> (R*G x C) probabilities with the unimix floor.
  nn::Var grouped_probs(nn::Tape& t, nn::Var logits) const;
  // Straight-through sample (or the probabilities themselves in mean-latent
  // mode); stream seeds one categorical draw per group per row.
  nn::Var sample_latent(nn::Tape& t, nn::Var grouped, int rows,
                        const std::vector<Rng>& row_streams) const;
  nn::Var reward_logits(nn::Tape& t, nn::Var h, nn::Var z_flat) const;
  nn::Var continue_logits(nn::Tape& t, nn::Var h, nn::Var z_flat) const;

  // Per-group KL(a || b) summed over groups -> (R x 1). Inputs are grouped
  // probabilities (R*G x C) on the same tape.
  nn::Var grouped_kl(nn::Tape& t, nn::Var a, nn::Var b, int rows) const;

  WmLossOut wm_loss(nn::Tape& t, const WmBatch& batch, Rng& rng) const;

  // ---- Value-level helpers (no gradients) for acting and imagination ----
  nn::Mat initial_h(int rows) const;
  nn::Mat posterior_probs_rows(const nn::Mat& h, const nn::Mat& x) const;
  nn::Mat prior_probs_rows(const nn::Mat& h) const;
  nn::Mat step_rows(const nn::Mat& h, const nn::Mat& z_flat,
                    const std::vector<int>& actions) const;
  Eigen::VectorXd predict_reward_rows(const nn::Mat& h,
                                      const nn::Mat& z_flat) const;
  Eigen::VectorXd predict_continue_rows(const nn::Mat& h,
                                        const nn::Mat& z_flat) const;
  // Draws one-hot samples from grouped probabilities and returns them
  // flattened to rows x (G*C).
  nn::Mat sample_flat_rows(const nn::Mat& grouped, int rows,
                           const std::vector<Rng>& row_streams) const;

  const TwoHot& reward_head() const { return reward_two_hot_; }

  nn::Mat action_onehot(const std::vector<int>& actions) const;

 private:
  WmConfig cfg_;
  TwoHot reward_two_hot_;
  nn::Param* in_w_;
  nn::Param* in_b_;
  nn::Param* gru_wir_;
  nn::Param* gru_whr_;
  nn::Param* gru_br_;
  nn::Param* gru_wiu_;
  nn::Param* gru_whu_;
  nn::Param* gru_bu_;
  nn::Param* gru_wic_;
  nn::Param* gru_whc_;
  nn::Param* gru_bc_;
  nn::Mlp prior_mlp_;
  nn::Mlp post_mlp_;
  nn::Mlp reward_mlp_;
  nn::Mlp cont_mlp_;
};

}  // namespace courier::wm
