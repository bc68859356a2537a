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

#include "courier/led/encoder.hpp"

#include <cmath>

namespace courier::led {

using nn::Mat;
using nn::Tape;
using nn::Var;

void update_temporal(TemporalArray& D, const std::vector<env::Pos>& positions,
                     const std::vector<bool>& alive,
                     const std::vector<env::Pos>& prev_positions,
                     const std::vector<bool>& prev_alive, env::Pos agent_pos,
                     int t) {
  if (t < 1) throw UsageError("update_temporal: t must be >= 1");
  if (t >= D.values.cols()) throw UsageError("update_temporal: t beyond horizon");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!alive[i] || !prev_alive[i]) continue;  // removed rows stop updating
    double ry = positions[i].y - agent_pos.y;
    double rx = positions[i].x - agent_pos.x;
    double vy = positions[i].y - prev_positions[i].y;
    double vx = positions[i].x - prev_positions[i].x;
    double rn = std::sqrt(ry * ry + rx * rx);
    double vn = std::sqrt(vy * vy + vx * vx);
    double d = 0.0;  // stationary or on-agent cases stay at 0
    if (rn > 0.0 && vn > 0.0) d = (ry * vy + rx * vx) / (rn * vn);
    D.values(static_cast<int>(i), t) = d;
  }
}

StepInput make_step_input(const env::Observation& obs,
                          const TemporalArray& D) {
  StepInput s;
  s.d_rows = D.values;
  for (const auto& tr : obs.tracks) {
    s.symbols.push_back(tr.symbol);
    s.positions.push_back(tr.pos);
    s.alive.push_back(tr.alive);
  }
  s.agent = obs.agent;
  s.agent_alive = obs.agent_alive;
  s.has_message = obs.has_message;
  s.t = obs.t;
  return s;
}

Encoder::Encoder(const EncoderConfig& cfg, nn::ParamStore& store, Rng& rng)
    : cfg_(cfg) {
  using Init = nn::ParamStore::Init;
  sym_emb_ = &store.add("enc.sym", env::kNumKinds + 2, cfg.d_sb,
                        Init::glorot_uniform, rng);
  time_emb_ =
      &store.add("enc.time", cfg.h_max, cfg.d_time, Init::glorot_uniform, rng);
  sent_proj_ =
      &store.add("enc.sent_proj", cfg.d_enc, cfg.d_s, Init::glorot_uniform, rng);
  w_v_ = &store.add("enc.wv", cfg.d_s, cfg.d_val, Init::glorot_uniform, rng);
  agent_proj_ = &store.add("enc.agent_proj", cfg.d_sb, cfg.d_val,
                           Init::glorot_uniform, rng);
  conv1_k_ = &store.add("enc.conv1.k", 9 * cfg.d_val, cfg.cnn_c1,
                        Init::glorot_uniform, rng);
  conv1_b_ = &store.add("enc.conv1.b", 1, cfg.cnn_c1, Init::zeros, rng);
  conv2_k_ = &store.add("enc.conv2.k", 9 * cfg.cnn_c1, cfg.cnn_c2,
                        Init::glorot_uniform, rng);
  conv2_b_ = &store.add("enc.conv2.b", 1, cfg.cnn_c2, Init::zeros, rng);
  query_mlp_ = nn::Mlp::create(store, "enc.qmlp", cfg.d_sb + cfg.h_max,
                               cfg.mlp_hidden, cfg.mlp_layers, cfg.d, rng);
  key_mlp_ = nn::Mlp::create(store, "enc.kmlp", cfg.d_s, cfg.mlp_hidden,
                             cfg.mlp_layers, cfg.d, rng);
  out_mlp_ = nn::Mlp::create(
      store, "enc.out", cfg.grid_h * cfg.grid_w * cfg.cnn_c2 + cfg.d_time,
      cfg.mlp_hidden, cfg.mlp_layers, cfg.d_x, rng);
}

Var Encoder::project(Tape& t, const Mat& embeddings) const {
  if (embeddings.cols() != cfg_.d_enc)
    throw ConfigError("sentence embedding width mismatch");
  return nn::matmul(t.constant(embeddings), t.param(*sent_proj_));
}

Encoder::SentenceCtx Encoder::sentences(Tape& t, const Mat& embeddings) const {
  if (embeddings.rows() == 0) throw ConfigError("empty manual");
  SentenceCtx ctx;
  ctx.projected = project(t, embeddings);
  ctx.keys = key_mlp_.apply(t, ctx.projected);
  ctx.values = nn::matmul(ctx.projected, t.param(*w_v_));
  return ctx;
}

Var Encoder::queries(Tape& t, const std::vector<StepInput>& steps) const {
  int n = static_cast<int>(steps[0].symbols.size());
  int T = static_cast<int>(steps.size());
  std::vector<int> sym_idx;
  Mat d_rows(T * n, cfg_.h_max);
  for (int ti = 0; ti < T; ++ti) {
    const StepInput& s = steps[static_cast<std::size_t>(ti)];
    if (static_cast<int>(s.symbols.size()) != n ||
        s.d_rows.rows() != n || s.d_rows.cols() != cfg_.h_max)
      throw ConfigError("step input shape mismatch");
    for (int i = 0; i < n; ++i) {
      sym_idx.push_back(s.symbols[static_cast<std::size_t>(i)] - 1);
      d_rows.row(ti * n + i) = s.d_rows.row(i);
    }
  }
  Var sym_rows = nn::gather_rows(t.param(*sym_emb_), sym_idx);
  Var qin = nn::concat_cols({sym_rows, t.constant(d_rows)});
  return query_mlp_.apply(t, qin);  // (T*n) x d
}

Var Encoder::encode_sequence(Tape& t, const SentenceCtx& ctx,
                             const std::vector<StepInput>& steps) const {
  if (steps.empty()) throw UsageError("encode_sequence: no steps");
  int n = static_cast<int>(steps[0].symbols.size());
  int T = static_cast<int>(steps.size());
  int cells = cfg_.grid_h * cfg_.grid_w;

  Var q = queries(t, steps);
  Var scores = nn::scale(nn::matmul_nt(q, ctx.keys),
                         1.0 / std::sqrt(static_cast<double>(cfg_.d)));
  Var gamma = nn::softmax_rows(scores);       // (T*n) x n_sent
  Var grounded = nn::matmul(gamma, ctx.values);  // (T*n) x d_val

  // Agent embedding rows per step (symbol depends on the message flag).
  std::vector<int> agent_idx;
  for (const StepInput& s : steps)
    agent_idx.push_back(env::kNumKinds + (s.has_message ? 1 : 0));
  Var agent_rows = nn::matmul(nn::gather_rows(t.param(*sym_emb_), agent_idx),
                              t.param(*agent_proj_));  // T x d_val

  std::vector<Var> x_rows;
  for (int ti = 0; ti < T; ++ti) {
    const StepInput& s = steps[static_cast<std::size_t>(ti)];
    if (s.t >= cfg_.h_max)
      throw UsageError("encode: step index beyond temporal horizon");
    std::vector<Var> rows;
    std::vector<int> cell_idx;
    std::vector<int> live;
    for (int i = 0; i < n; ++i) {
      if (!s.alive[static_cast<std::size_t>(i)]) continue;  // masked query
      live.push_back(ti * n + i);
      cell_idx.push_back(s.positions[static_cast<std::size_t>(i)].y *
                             cfg_.grid_w +
                         s.positions[static_cast<std::size_t>(i)].x);
    }
    if (!live.empty()) rows.push_back(nn::gather_rows(grounded, live));
    if (s.agent_alive) {
      rows.push_back(nn::slice_rows(agent_rows, ti, 1));
      cell_idx.push_back(s.agent.y * cfg_.grid_w + s.agent.x);
    }
    Var grid = rows.empty()
                   ? t.constant(Mat::Zero(cells, cfg_.d_val))
                   : nn::scatter_add_rows(nn::concat_rows(rows), cell_idx,
                                          cells);
    Var c1 = nn::silu_(nn::conv2d_3x3(grid, cfg_.grid_h, cfg_.grid_w,
                                      t.param(*conv1_k_), t.param(*conv1_b_)));
    Var c2 = nn::silu_(nn::conv2d_3x3(c1, cfg_.grid_h, cfg_.grid_w,
                                      t.param(*conv2_k_), t.param(*conv2_b_)));
    Var flat = nn::flatten_to_row(c2);
    Var time_row = nn::gather_rows(t.param(*time_emb_), {s.t});
    x_rows.push_back(nn::concat_cols({flat, time_row}));
  }
  Var stacked = nn::concat_rows(x_rows);  // T x (cells*c2 + d_time)
  return out_mlp_.apply(t, stacked);      // T x d_x
}

Var Encoder::encode(Tape& t, const SentenceCtx& ctx,
                    const StepInput& step) const {
  return encode_sequence(t, ctx, {step});
}

Mat Encoder::attention_scores(const Mat& embeddings,
                              const StepInput& step) const {
  Tape t(/*grad_enabled=*/false);
  SentenceCtx ctx = sentences(t, embeddings);
  Var q = queries(t, {step});
  Var scores = nn::scale(nn::matmul_nt(q, ctx.keys),
                         1.0 / std::sqrt(static_cast<double>(cfg_.d)));
  return nn::softmax_rows(scores).val();
}

}  // namespace courier::led
