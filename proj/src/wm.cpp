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

#include "courier/wm/wm.hpp"

#include <cmath>

namespace courier::wm {

using nn::Mat;
using nn::Tape;
using nn::Var;

double symlog(double x) { return x >= 0 ? std::log1p(x) : -std::log1p(-x); }
double symexp(double x) { return x >= 0 ? std::expm1(x) : -std::expm1(-x); }

double TwoHot::center(int i) const {
  return lo + (hi - lo) * static_cast<double>(i) /
                  static_cast<double>(bins - 1);
}

Mat TwoHot::targets(const Mat& values) const {
  Mat out = Mat::Zero(values.rows(), bins);
  double step = (hi - lo) / static_cast<double>(bins - 1);
  for (int r = 0; r < values.rows(); ++r) {
    double y = symlog(values(r, 0));
    y = std::min(std::max(y, lo), hi);
    int k = static_cast<int>(std::floor((y - lo) / step));
    if (k >= bins - 1) k = bins - 2;
    double right = (y - center(k)) / step;  // in [0, 1]
    out(r, k) = 1.0 - right;
    out(r, k + 1) = right;
  }
  return out;
}

double TwoHot::decode(const Eigen::RowVectorXd& probs) const {
  double acc = 0.0;
  for (int i = 0; i < bins; ++i) acc += probs(i) * center(i);
  return symexp(acc);
}

WorldModel::WorldModel(const WmConfig& cfg, nn::ParamStore& store, Rng& rng)
    : cfg_(cfg) {
  reward_two_hot_ =
      TwoHot{cfg.reward_bins, cfg.reward_lo, cfg.reward_hi};
  using Init = nn::ParamStore::Init;
  int zin = cfg.z_flat() + cfg.num_actions;
  in_w_ = &store.add("wm.in.w", zin, cfg.h_dim, Init::glorot_uniform, rng);
  in_b_ = &store.add("wm.in.b", 1, cfg.h_dim, Init::zeros, rng);
  auto gru = [&store, &rng, &cfg](const std::string& name, int rows) {
    return &store.add("wm.gru." + name, rows, cfg.h_dim,
                      rows == 1 ? Init::zeros : Init::glorot_uniform, rng);
  };
  gru_wir_ = gru("wir", cfg.h_dim);
  gru_whr_ = gru("whr", cfg.h_dim);
  gru_br_ = gru("br", 1);
  gru_wiu_ = gru("wiu", cfg.h_dim);
  gru_whu_ = gru("whu", cfg.h_dim);
  gru_bu_ = gru("bu", 1);
  gru_wic_ = gru("wic", cfg.h_dim);
  gru_whc_ = gru("whc", cfg.h_dim);
  gru_bc_ = gru("bc", 1);
  prior_mlp_ = nn::Mlp::create(store, "wm.prior", cfg.h_dim, cfg.mlp_hidden,
                               cfg.mlp_layers, cfg.z_flat(), rng);
  post_mlp_ = nn::Mlp::create(store, "wm.post", cfg.h_dim + cfg.d_x,
                              cfg.mlp_hidden, cfg.mlp_layers, cfg.z_flat(),
                              rng);
  reward_mlp_ = nn::Mlp::create(store, "wm.reward", cfg.h_dim + cfg.z_flat(),
                                cfg.mlp_hidden, cfg.mlp_layers,
                                cfg.reward_bins, rng, /*zero_last=*/true);
  cont_mlp_ = nn::Mlp::create(store, "wm.cont", cfg.h_dim + cfg.z_flat(),
                              cfg.mlp_hidden, cfg.mlp_layers, 1, rng,
                              /*zero_last=*/true);
}

Var WorldModel::sequence_step(Tape& t, Var h, Var z_flat,
                              Var a_onehot) const {
  Var y = nn::silu_(nn::add_rowvec(
      nn::matmul(nn::concat_cols({z_flat, a_onehot}), t.param(*in_w_)),
      t.param(*in_b_)));
  Var r = nn::sigmoid_(nn::add_rowvec(
      nn::add(nn::matmul(y, t.param(*gru_wir_)), nn::matmul(h, t.param(*gru_whr_))),
      t.param(*gru_br_)));
  Var u = nn::sigmoid_(nn::add_rowvec(
      nn::add(nn::matmul(y, t.param(*gru_wiu_)), nn::matmul(h, t.param(*gru_whu_))),
      t.param(*gru_bu_)));
  Var c = nn::tanh_(nn::add_rowvec(
      nn::add(nn::matmul(y, t.param(*gru_wic_)),
              nn::matmul(nn::cmul(r, h), t.param(*gru_whc_))),
      t.param(*gru_bc_)));
  // h' = u*h + (1-u)*c
  return nn::add(nn::cmul(u, h), nn::sub(c, nn::cmul(u, c)));
}

Var WorldModel::prior_logits(Tape& t, Var h) const {
  return prior_mlp_.apply(t, h);
}

Var WorldModel::posterior_logits(Tape& t, Var h, Var x) const {
  return post_mlp_.apply(t, nn::concat_cols({h, x}));
}

Var WorldModel::grouped_probs(Tape&, Var logits) const {
  Var grouped = nn::split_groups(logits, cfg_.z_groups);  // (R*G) x C
  Var sm = nn::softmax_rows(grouped);
  if (cfg_.unimix <= 0.0) return sm;
  return nn::add_scalar(nn::scale(sm, 1.0 - cfg_.unimix),
                        cfg_.unimix / static_cast<double>(cfg_.z_classes));
}

Var WorldModel::sample_latent(Tape&, Var grouped, int rows,
                              const std::vector<Rng>& row_streams) const {
  if (cfg_.mean_latent) return nn::regroup_rows(grouped, rows);
  if (static_cast<int>(row_streams.size()) != rows)
    throw ConfigError("sample_latent: one stream per row required");
  const Mat& p = grouped.val();
  Mat onehot = Mat::Zero(p.rows(), p.cols());
  for (int r = 0; r < rows; ++r) {
    Rng stream = row_streams[static_cast<std::size_t>(r)];
    for (int g = 0; g < cfg_.z_groups; ++g) {
      int row = r * cfg_.z_groups + g;
      int k = stream.categorical(p.row(row));
      onehot(row, k) = 1.0;
    }
  }
  // Straight-through: forward value is the one-hot sample, gradient flows to
  // the probabilities unchanged.
  Var st = nn::add_const(grouped, onehot - p);
  return nn::regroup_rows(st, rows);
}

Var WorldModel::reward_logits(Tape& t, Var h, Var z_flat) const {
  return reward_mlp_.apply(t, nn::concat_cols({h, z_flat}));
}

Var WorldModel::continue_logits(Tape& t, Var h, Var z_flat) const {
  return cont_mlp_.apply(t, nn::concat_cols({h, z_flat}));
}

Var WorldModel::grouped_kl(Tape&, Var a, Var b, int rows) const {
  Var diff = nn::sub(nn::log_(a), nn::log_(b));
  Var per_group = nn::rowsum(nn::cmul(a, diff));  // (R*G) x 1
  return nn::rowsum(nn::regroup_rows(per_group, rows));  // R x 1
}

namespace {

// Per-row cross entropy against fixed targets: -sum(target * log_softmax).
Var ce_rows(Var logits, const Mat& targets) {
  return nn::neg(nn::rowsum(nn::cmul_const(nn::log_softmax_rows(logits),
                                           targets)));
}

// Bernoulli NLL with targets in {0,1}: softplus(l) - c*l.
Var bce_rows(Var logit, const Mat& targets) {
  return nn::sub(nn::softplus_(logit), nn::cmul_const(logit, targets));
}

}  // namespace

WmLossOut WorldModel::wm_loss(Tape& t, const WmBatch& batch, Rng& rng) const {
  int B = static_cast<int>(batch.x.size());
  if (B == 0) throw UsageError("wm_loss: empty batch");
  int T = static_cast<int>(batch.actions.cols());
  for (const Var& x : batch.x)
    if (x.rows() != T || x.cols() != cfg_.d_x)
      throw ConfigError("wm_loss: x shape mismatch");
  if (batch.rewards.rows() != B || batch.mask.rows() != B ||
      batch.continues.rows() != B ||
      static_cast<int>(batch.class_weight.size()) != B)
    throw ConfigError("wm_loss: batch field shapes disagree");

  Mat w_pred_col(B, 1);
  for (int b = 0; b < B; ++b)
    w_pred_col(b, 0) = batch.class_weight[static_cast<std::size_t>(b)];

  Var h = t.constant(initial_h(B));
  std::vector<Var> hs, zs;
  hs.reserve(static_cast<std::size_t>(T));
  zs.reserve(static_cast<std::size_t>(T));

  Var dyn_sum = t.constant(Mat::Zero(1, 1));
  Var rep_sum = t.constant(Mat::Zero(1, 1));

  for (int ti = 0; ti < T; ++ti) {
    std::vector<Var> xrows;
    for (int b = 0; b < B; ++b)
      xrows.push_back(nn::slice_rows(batch.x[static_cast<std::size_t>(b)], ti, 1));
    Var x = nn::concat_rows(xrows);  // B x d_x

    Var post = grouped_probs(t, posterior_logits(t, h, x));
    Var prior = grouped_probs(t, prior_logits(t, h));

    Mat m = batch.mask.col(ti);  // B x 1
    Var dyn = nn::clamp_min(grouped_kl(t, nn::stop_grad(post), prior, B),
                            cfg_.free_nats);
    Var rep = nn::clamp_min(grouped_kl(t, post, nn::stop_grad(prior), B),
                            cfg_.free_nats);
    dyn_sum = nn::add(dyn_sum, nn::sum_all(nn::cmul_const(dyn, m)));
    rep_sum = nn::add(rep_sum, nn::sum_all(nn::cmul_const(rep, m)));

    std::vector<Rng> streams;
    for (int b = 0; b < B; ++b)
      streams.push_back(rng.fork("post", static_cast<std::uint64_t>(ti),
                                 static_cast<std::uint64_t>(b)));
    Var z = sample_latent(t, post, B, streams);  // B x z_flat

    hs.push_back(h);
    zs.push_back(z);

    std::vector<int> acts;
    for (int b = 0; b < B; ++b) acts.push_back(batch.actions(b, ti));
    h = sequence_step(t, h, z, t.constant(action_onehot(acts)));
  }

  // Single-step prediction loss at every (b, t) from the posterior latent.
  Var H = nn::concat_rows(hs);  // (T*B) x h_dim, t-major
  Var Z = nn::concat_rows(zs);
  Mat r_targets(T * B, 1), c_targets(T * B, 1), m_flat(T * B, 1),
      w_flat(T * B, 1);
  for (int ti = 0; ti < T; ++ti)
    for (int b = 0; b < B; ++b) {
      r_targets(ti * B + b, 0) = batch.rewards(b, ti);
      c_targets(ti * B + b, 0) = batch.continues(b, ti);
      m_flat(ti * B + b, 0) = batch.mask(b, ti);
      w_flat(ti * B + b, 0) = w_pred_col(b, 0);
    }
  Mat wm_flat = m_flat.cwiseProduct(w_flat);

  Var r_nll = ce_rows(reward_logits(t, H, Z),
                      reward_two_hot_.targets(r_targets));
  Var c_nll = bce_rows(continue_logits(t, H, Z), c_targets);
  Var pred_sum =
      nn::sum_all(nn::cmul_const(nn::add(r_nll, c_nll), wm_flat));

  // Per-sequence masked mean reward NLL (adversarial replay signal).
  std::vector<double> reward_nll(static_cast<std::size_t>(B), 0.0);
  {
    const Mat& rv = r_nll.val();
    for (int b = 0; b < B; ++b) {
      double acc = 0.0, count = 0.0;
      for (int ti = 0; ti < T; ++ti) {
        acc += rv(ti * B + b, 0) * batch.mask(b, ti);
        count += batch.mask(b, ti);
      }
      reward_nll[static_cast<std::size_t>(b)] = count > 0 ? acc / count : 0.0;
    }
  }

  // Open-loop rollout from every posterior state, all starts advanced in
  // lockstep; the term for offset k carries weight lambda^(k-1).
  if (cfg_.pred_horizon > 1) {
    Var oh = cfg_.truncate_msl_grads ? nn::stop_grad(H) : H;
    Var oz = cfg_.truncate_msl_grads ? nn::stop_grad(Z) : Z;
    double lam = 1.0;
    for (int k = 1; k < cfg_.pred_horizon; ++k) {
      std::vector<int> acts(static_cast<std::size_t>(T * B), 0);
      Mat valid(T * B, 1);
      for (int ti = 0; ti < T; ++ti)
        for (int b = 0; b < B; ++b) {
          int src = ti + k - 1, tgt = ti + k;
          bool ok = tgt < T && batch.mask(b, tgt) > 0.0;
          valid(ti * B + b, 0) = ok ? 1.0 : 0.0;
          if (ok) acts[static_cast<std::size_t>(ti * B + b)] =
              batch.actions(b, src);
        }
      oh = sequence_step(t, oh, oz, t.constant(action_onehot(acts)));
      Var prior = grouped_probs(t, prior_logits(t, oh));
      std::vector<Rng> streams;
      for (int ti = 0; ti < T; ++ti)
        for (int b = 0; b < B; ++b)
          streams.push_back(rng.fork("prior", static_cast<std::uint64_t>(ti),
                                     static_cast<std::uint64_t>(k),
                                     static_cast<std::uint64_t>(b)));
      oz = sample_latent(t, prior, T * B, streams);

      Mat rt(T * B, 1), ct(T * B, 1);
      for (int ti = 0; ti < T; ++ti)
        for (int b = 0; b < B; ++b) {
          int tgt = ti + k;
          rt(ti * B + b, 0) = tgt < T ? batch.rewards(b, tgt) : 0.0;
          ct(ti * B + b, 0) = tgt < T ? batch.continues(b, tgt) : 0.0;
        }
      Mat weight = valid.cwiseProduct(w_flat) * lam;
      Var ro_nll = ce_rows(reward_logits(t, oh, oz),
                           reward_two_hot_.targets(rt));
      Var co_nll = bce_rows(continue_logits(t, oh, oz), ct);
      pred_sum = nn::add(
          pred_sum,
          nn::sum_all(nn::cmul_const(nn::add(ro_nll, co_nll), weight)));
      lam *= cfg_.msl_lambda;
    }
  }

  double denom = batch.mask.sum();
  if (denom <= 0.0) throw ConfigError("wm_loss: empty mask");
  double inv = 1.0 / denom;

  WmLossOut out;
  out.pred = nn::scale(pred_sum, inv);
  out.dyn = nn::scale(dyn_sum, inv);
  out.rep = nn::scale(rep_sum, inv);
  out.total = nn::add(
      nn::scale(out.pred, cfg_.beta_pred),
      nn::add(nn::scale(out.dyn, cfg_.beta_dyn),
              nn::scale(out.rep, cfg_.beta_rep)));
  out.pred_v = out.pred.val()(0, 0);
  out.dyn_v = out.dyn.val()(0, 0);
  out.rep_v = out.rep.val()(0, 0);
  out.total_v = out.total.val()(0, 0);
  out.reward_nll = std::move(reward_nll);
  return out;
}

// ---- value-level helpers -----------------------------------------------------

Mat WorldModel::initial_h(int rows) const {
  return Mat::Zero(rows, cfg_.h_dim);
}

Mat WorldModel::action_onehot(const std::vector<int>& actions) const {
  Mat a = Mat::Zero(static_cast<int>(actions.size()), cfg_.num_actions);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] < 0 || actions[i] >= cfg_.num_actions)
      throw ConfigError("action index out of range");
    a(static_cast<int>(i), actions[i]) = 1.0;
  }
  return a;
}

Mat WorldModel::posterior_probs_rows(const Mat& h, const Mat& x) const {
  Tape t(false);
  return grouped_probs(t, posterior_logits(t, t.constant(h), t.constant(x)))
      .val();
}

Mat WorldModel::prior_probs_rows(const Mat& h) const {
  Tape t(false);
  return grouped_probs(t, prior_logits(t, t.constant(h))).val();
}

Mat WorldModel::step_rows(const Mat& h, const Mat& z_flat,
                          const std::vector<int>& actions) const {
  Tape t(false);
  return sequence_step(t, t.constant(h), t.constant(z_flat),
                       t.constant(action_onehot(actions)))
      .val();
}

Eigen::VectorXd WorldModel::predict_reward_rows(const Mat& h,
                                                const Mat& z_flat) const {
  Tape t(false);
  Var logits = reward_logits(t, t.constant(h), t.constant(z_flat));
  Mat probs = nn::softmax_rows(logits).val();
  Eigen::VectorXd out(h.rows());
  for (int r = 0; r < h.rows(); ++r)
    out(r) = reward_two_hot_.decode(probs.row(r));
  return out;
}

Eigen::VectorXd WorldModel::predict_continue_rows(const Mat& h,
                                                  const Mat& z_flat) const {
  Tape t(false);
  Var logits = continue_logits(t, t.constant(h), t.constant(z_flat));
  Mat p = nn::sigmoid_(logits).val();
  return p.col(0);
}

Mat WorldModel::sample_flat_rows(const Mat& grouped, int rows,
                                 const std::vector<Rng>& row_streams) const {
  Mat flat = Mat::Zero(rows, cfg_.z_flat());
  if (cfg_.mean_latent) {
    for (int r = 0; r < rows; ++r)
      for (int g = 0; g < cfg_.z_groups; ++g)
        for (int c = 0; c < cfg_.z_classes; ++c)
          flat(r, g * cfg_.z_classes + c) = grouped(r * cfg_.z_groups + g, c);
    return flat;
  }
  if (static_cast<int>(row_streams.size()) != rows)
    throw ConfigError("sample_flat_rows: one stream per row required");
  for (int r = 0; r < rows; ++r) {
    Rng stream = row_streams[static_cast<std::size_t>(r)];
    for (int g = 0; g < cfg_.z_groups; ++g) {
      int k = stream.categorical(grouped.row(r * cfg_.z_groups + g));
      flat(r, g * cfg_.z_classes + k) = 1.0;
    }
  }
  return flat;
}

}  // namespace courier::wm
