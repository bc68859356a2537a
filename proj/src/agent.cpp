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

#include "courier/agent/agent.hpp"

#include <algorithm>
#include <cmath>

namespace courier::agent {

using nn::Tape;
using nn::Var;

ActorCritic::ActorCritic(const AcConfig& cfg, const wm::WmConfig& wm_cfg,
                         nn::ParamStore& store, Rng& rng)
    : cfg_(cfg),
      state_dim_(wm_cfg.h_dim + wm_cfg.z_flat()),
      num_actions_(wm_cfg.num_actions) {
  value_two_hot_ = wm::TwoHot{cfg.value_bins, cfg.value_lo, cfg.value_hi};
  actor_mlp_ = nn::Mlp::create(store, "ac.actor", state_dim_, cfg.mlp_hidden,
                               cfg.mlp_layers, num_actions_, rng,
                               /*zero_last=*/true);
  critic_mlp_ = nn::Mlp::create(store, "ac.critic", state_dim_,
                                cfg.mlp_hidden, cfg.mlp_layers,
                                cfg.value_bins, rng, /*zero_last=*/true);
}

Var ActorCritic::actor_logits(Tape& t, Var state) const {
  return actor_mlp_.apply(t, state);
}

Var ActorCritic::critic_logits(Tape& t, Var state) const {
  return critic_mlp_.apply(t, state);
}

Mat ActorCritic::action_probs_rows(const Mat& h, const Mat& z_flat) const {
  Tape t(false);
  Var s = nn::concat_cols({t.constant(h), t.constant(z_flat)});
  Mat p = nn::softmax_rows(actor_logits(t, s)).val();
  double u = cfg_.action_unimix;
  if (u > 0.0)
    p = (1.0 - u) * p.array() + u / static_cast<double>(num_actions_);
  return p;
}

Eigen::VectorXd ActorCritic::values_rows(const Mat& h,
                                         const Mat& z_flat) const {
  Tape t(false);
  Var s = nn::concat_cols({t.constant(h), t.constant(z_flat)});
  Mat probs = nn::softmax_rows(critic_logits(t, s)).val();
  Eigen::VectorXd out(h.rows());
  for (int r = 0; r < h.rows(); ++r)
    out(r) = value_two_hot_.decode(probs.row(r));
  return out;
}

ImaginedRollout imagine(const wm::WorldModel& wm, const ActorCritic& ac,
                        const Mat& h0, const Mat& z0, int horizon, Rng& rng) {
  if (horizon <= 0) throw UsageError("imagination horizon must be positive");
  int B = static_cast<int>(h0.rows());
  if (z0.rows() != B) throw ConfigError("imagine: start latent rows disagree");

  ImaginedRollout ro;
  ro.h.push_back(h0);
  ro.z.push_back(z0);
  ro.actions = Eigen::MatrixXi::Zero(B, horizon);
  ro.rewards = Mat::Zero(B, horizon);
  ro.continues = Mat::Zero(B, horizon);

  for (int k = 0; k < horizon; ++k) {
    Mat probs = ac.action_probs_rows(ro.h[static_cast<std::size_t>(k)],
                                     ro.z[static_cast<std::size_t>(k)]);
    std::vector<int> acts(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      Rng s = rng.fork("imag_act", static_cast<std::uint64_t>(k),
                       static_cast<std::uint64_t>(b));
      acts[static_cast<std::size_t>(b)] = s.categorical(probs.row(b));
      ro.actions(b, k) = acts[static_cast<std::size_t>(b)];
    }
    Mat h_next = wm.step_rows(ro.h[static_cast<std::size_t>(k)],
                              ro.z[static_cast<std::size_t>(k)], acts);
    Mat grouped = wm.prior_probs_rows(h_next);
    std::vector<Rng> streams;
    for (int b = 0; b < B; ++b)
      streams.push_back(rng.fork("imag_z", static_cast<std::uint64_t>(k + 1),
                                 static_cast<std::uint64_t>(b)));
    Mat z_next = wm.sample_flat_rows(grouped, B, streams);
    ro.rewards.col(k) = wm.predict_reward_rows(h_next, z_next);
    ro.continues.col(k) = wm.predict_continue_rows(h_next, z_next);
    ro.h.push_back(std::move(h_next));
    ro.z.push_back(std::move(z_next));
  }
  return ro;
}

Mat lambda_returns(const Mat& rewards, const Mat& continues, const Mat& values,
                   double gamma, double lambda) {
  int B = static_cast<int>(rewards.rows());
  int H = static_cast<int>(rewards.cols());
  if (continues.rows() != B || continues.cols() != H || values.rows() != B ||
      values.cols() != H + 1)
    throw ConfigError("lambda_returns: shape mismatch");
  Mat R(B, H);
  for (int b = 0; b < B; ++b) {
    // next starts at v_H, so the k = H-1 blend collapses to the bootstrap.
    double next = values(b, H);
    for (int k = H - 1; k >= 0; --k) {
      double blend = (1.0 - lambda) * values(b, k + 1) + lambda * next;
      next = rewards(b, k) + gamma * continues(b, k) * blend;
      R(b, k) = next;
    }
  }
  return R;
}

namespace {

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  double rank = p * static_cast<double>(v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = rank - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

Var two_hot_nll(Var logits, const Mat& targets) {
  return nn::neg(
      nn::rowsum(nn::cmul_const(nn::log_softmax_rows(logits), targets)));
}

}  // namespace

PolicyLosses policy_update(const ActorCritic& ac, const ImaginedRollout& ro,
                           nn::Adam& actor_opt, nn::Adam& critic_opt,
                           double& ret_range) {
  const AcConfig& cfg = ac.config();
  int B = ro.batch(), H = ro.horizon();
  int S = ac.state_dim();

  // States stacked k-major: row k*B + b. Values cover s_0..s_H.
  Mat states((H + 1) * B, S);
  for (int k = 0; k <= H; ++k)
    for (int b = 0; b < B; ++b) {
      states.block(k * B + b, 0, 1, ro.h[0].cols()) =
          ro.h[static_cast<std::size_t>(k)].row(b);
      states.block(k * B + b, ro.h[0].cols(), 1, ro.z[0].cols()) =
          ro.z[static_cast<std::size_t>(k)].row(b);
    }
  Mat h_stack = states.leftCols(ro.h[0].cols());
  Mat z_stack = states.rightCols(ro.z[0].cols());
  Eigen::VectorXd v_stack = ac.values_rows(h_stack, z_stack);
  Mat values(B, H + 1);
  for (int k = 0; k <= H; ++k)
    for (int b = 0; b < B; ++b) values(b, k) = v_stack(k * B + b);

  Mat R = lambda_returns(ro.rewards, ro.continues, values, cfg.gamma,
                         cfg.lambda);

  // Step weights: probability the trajectory is still running at s_k.
  Mat w(B, H);
  for (int b = 0; b < B; ++b) {
    double alive = 1.0;
    for (int k = 0; k < H; ++k) {
      w(b, k) = alive;
      alive *= ro.continues(b, k);
    }
  }

  // Return normalization: EMA of the 5th-95th percentile range, floored at 1.
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(B * H));
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < H; ++k) flat.push_back(R(b, k));
  double range = percentile(flat, 0.95) - percentile(flat, 0.05);
  ret_range = ret_range <= 0.0
                  ? range
                  : cfg.retnorm_decay * ret_range +
                        (1.0 - cfg.retnorm_decay) * range;
  double norm = std::max(1.0, ret_range);

  int N = B * H;
  int A = ac.num_actions();
  Mat act_states = states.topRows(N);
  Mat adv(N, 1), w_col(N, 1), r_col(N, 1), onehot = Mat::Zero(N, A);
  for (int k = 0; k < H; ++k)
    for (int b = 0; b < B; ++b) {
      int i = k * B + b;
      adv(i, 0) = (R(b, k) - values(b, k)) / norm;
      w_col(i, 0) = w(b, k);
      r_col(i, 0) = R(b, k);
      onehot(i, ro.actions(b, k)) = 1.0;
    }
  double inv_n = 1.0 / static_cast<double>(N);

  PolicyLosses out;
  {
    Tape t;
    Var logits = ac.actor_logits(t, t.constant(act_states));
    Var probs = nn::softmax_rows(logits);
    if (cfg.action_unimix > 0.0)
      probs = nn::add_scalar(nn::scale(probs, 1.0 - cfg.action_unimix),
                             cfg.action_unimix / static_cast<double>(A));
    Var logp = nn::log_(probs);
    Var picked = nn::rowsum(nn::cmul_const(logp, onehot));      // N x 1
    Var entropy = nn::neg(nn::rowsum(nn::cmul(probs, logp)));   // N x 1
    Var gain = nn::add(nn::cmul_const(picked, w_col.cwiseProduct(adv)),
                       nn::cmul_const(entropy, w_col * cfg.entropy));
    Var loss = nn::scale(nn::neg(nn::sum_all(gain)), inv_n);
    out.actor = loss.val()(0, 0);
    out.entropy = entropy.val().sum() * inv_n;
    t.backward(loss);
    out.actor_grad_norm = actor_opt.step();
  }
  {
    Tape t;
    Var logits = ac.critic_logits(t, t.constant(act_states));
    Var nll = two_hot_nll(logits, ac.value_head().targets(r_col));
    Var loss = nn::scale(nn::sum_all(nn::cmul_const(nll, w_col)), inv_n);
    out.critic = loss.val()(0, 0);
    t.backward(loss);
    out.critic_grad_norm = critic_opt.step();
  }
  out.ret_norm = norm;
  return out;
}

namespace {

// Posterior latent distribution of a single observation under an empty
// history, replicated to n rows for sampling.
Mat start_grouped(const wm::WorldModel& wm, const led::Encoder& enc,
                  const Mat& sent_emb, const env::Observation& obs0, int n) {
  led::TemporalArray D;
  D.reset(static_cast<int>(obs0.tracks.size()), enc.config().h_max);
  led::StepInput s0 = led::make_step_input(obs0, D);
  Tape t(false);
  led::Encoder::SentenceCtx ctx = enc.sentences(t, sent_emb);
  Mat x = enc.encode(t, ctx, s0).val();
  Mat grouped = wm.posterior_probs_rows(wm.initial_h(1), x);
  int G = static_cast<int>(grouped.rows());
  Mat rep(n * G, grouped.cols());
  for (int i = 0; i < n; ++i) rep.middleRows(i * G, G) = grouped;
  return rep;
}

double weighted_return(const ImaginedRollout& ro, int b) {
  double alive = 1.0, acc = 0.0;
  for (int k = 0; k < ro.horizon(); ++k) {
    acc += alive * ro.rewards(b, k);
    alive *= ro.continues(b, k);
  }
  return acc;
}

}  // namespace

double estimate_return(const wm::WorldModel& wm, const ActorCritic& ac,
                       const led::Encoder& enc, const Mat& sentence_embeddings,
                       const env::Observation& obs0, int horizon, int n_traj,
                       Rng& rng) {
  if (n_traj <= 0) throw UsageError("need at least one trajectory");
  Mat grouped = start_grouped(wm, enc, sentence_embeddings, obs0, n_traj);
  std::vector<Rng> streams;
  for (int i = 0; i < n_traj; ++i)
    streams.push_back(rng.fork("est_z0", static_cast<std::uint64_t>(i)));
  Mat z0 = wm.sample_flat_rows(grouped, n_traj, streams);
  Rng imag = rng.fork("est_imag");
  ImaginedRollout ro =
      imagine(wm, ac, wm.initial_h(n_traj), z0, horizon, imag);
  double acc = 0.0;
  for (int b = 0; b < n_traj; ++b) acc += weighted_return(ro, b);
  return acc / static_cast<double>(n_traj);
}

FinetuneStats finetune(const wm::WorldModel& wm, const ActorCritic& ac,
                       const led::Encoder& enc, const Mat& sentence_embeddings,
                       const env::Observation& obs0, double thres,
                       const FinetuneConfig& fcfg, nn::ParamStore& store,
                       Rng& rng) {
  FinetuneStats stats;
  Rng est = rng.fork("estimate");
  stats.v_hat = estimate_return(wm, ac, enc, sentence_embeddings, obs0,
                                fcfg.horizon, fcfg.traj_per_step, est);
  if (stats.v_hat >= thres) {
    stats.early_exit = true;
    return stats;
  }
  const AcConfig& cfg = ac.config();
  nn::Adam actor_opt(store.with_prefix("ac.actor"), cfg.actor_lr,
                     cfg.grad_clip);
  nn::Adam critic_opt(store.with_prefix("ac.critic"), cfg.critic_lr,
                      cfg.grad_clip);
  double ret_range = 0.0;
  for (int step = 0; step < fcfg.steps; ++step) {
    Mat grouped =
        start_grouped(wm, enc, sentence_embeddings, obs0, fcfg.traj_per_step);
    std::vector<Rng> streams;
    for (int i = 0; i < fcfg.traj_per_step; ++i)
      streams.push_back(rng.fork("ft_z0", static_cast<std::uint64_t>(step),
                                 static_cast<std::uint64_t>(i)));
    Mat z0 = wm.sample_flat_rows(grouped, fcfg.traj_per_step, streams);
    Rng imag = rng.fork("ft_imag", static_cast<std::uint64_t>(step));
    ImaginedRollout ro = imagine(wm, ac, wm.initial_h(fcfg.traj_per_step), z0,
                                 fcfg.horizon, imag);
    policy_update(ac, ro, actor_opt, critic_opt, ret_range);
    stats.trajectories_generated += fcfg.traj_per_step;
    ++stats.steps_run;
  }
  return stats;
}

PolicyRuntime::PolicyRuntime(const led::Encoder* enc,
                             const wm::WorldModel* wm, const ActorCritic* ac,
                             Mat sentence_embeddings)
    : enc_(enc), wm_(wm), ac_(ac), sent_emb_(std::move(sentence_embeddings)) {
  reset();
}

void PolicyRuntime::reset() {
  h_ = wm_->initial_h(1);
  z_ = Mat::Zero(1, wm_->config().z_flat());
  has_prev_ = false;
}

int PolicyRuntime::act(const env::Observation& obs, bool greedy,
                       const Rng& stream) {
  int n = static_cast<int>(obs.tracks.size());
  if (!has_prev_) {
    temporal_.reset(n, enc_->config().h_max);
  } else {
    std::vector<env::Pos> cur, prev;
    std::vector<bool> cur_alive, prev_alive;
    for (const env::TrackObs& tr : obs.tracks) {
      cur.push_back(tr.pos);
      cur_alive.push_back(tr.alive);
    }
    for (const env::TrackObs& tr : prev_obs_.tracks) {
      prev.push_back(tr.pos);
      prev_alive.push_back(tr.alive);
    }
    led::update_temporal(temporal_, cur, cur_alive, prev, prev_alive,
                         obs.agent, obs.t);
  }
  led::StepInput step = led::make_step_input(obs, temporal_);
  Tape t(false);
  led::Encoder::SentenceCtx ctx = enc_->sentences(t, sent_emb_);
  Mat x = enc_->encode(t, ctx, step).val();
  Mat grouped = wm_->posterior_probs_rows(h_, x);
  std::vector<Rng> zs{stream.fork("z", static_cast<std::uint64_t>(obs.t))};
  z_ = wm_->sample_flat_rows(grouped, 1, zs);
  Mat probs = ac_->action_probs_rows(h_, z_);
  int action;
  if (greedy) {
    Eigen::Index arg;
    probs.row(0).maxCoeff(&arg);
    action = static_cast<int>(arg);
  } else {
    Rng s = stream.fork("act", static_cast<std::uint64_t>(obs.t));
    action = s.categorical(probs.row(0));
  }
  h_ = wm_->step_rows(h_, z_, {action});
  prev_obs_ = obs;
  has_prev_ = true;
  return action;
}

}  // namespace courier::agent
