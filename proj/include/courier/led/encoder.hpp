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
#include "courier/nn/tape.hpp"

namespace courier::led {

// Per-entity history of direction-alignment dot products: row i column t holds
// the dot of the normalized agent->entity offset with the normalized one-step
// displacement of entity i at step t. Sentinel -1 marks unobserved steps;
// degenerate cases (no movement, entity on the agent cell) record 0.
struct TemporalArray {
  nn::Mat values;  // n_tracks x h_max

  void reset(int n_tracks, int h_max) {
    values = nn::Mat::Constant(n_tracks, h_max, -1.0);
  }
};

// Writes column t (1-based stepping: call after the step that produced
// `positions` from `prev_positions`). Rows of removed entities stop updating.
void update_temporal(TemporalArray& D, const std::vector<env::Pos>& positions,
                     const std::vector<bool>& alive,
                     const std::vector<env::Pos>& prev_positions,
                     const std::vector<bool>& prev_alive, env::Pos agent_pos,
                     int t);

struct EncoderConfig {
  int grid_h = 10;
  int grid_w = 10;
  int h_max = 4;       // temporal array length == episode horizon
  int d_enc = 256;     // frozen sentence embedding width
  int d_s = 32;        // projected sentence width
  int d_sb = 32;       // symbol embedding width
  int d = 128;         // query/key width
  int d_val = 128;     // value width
  int d_time = 32;
  int mlp_hidden = 512;
  int mlp_layers = 3;
  int cnn_c1 = 32;
  int cnn_c2 = 64;
  int d_x = 512;       // output feature width
};

// Everything the encoder needs about one observation step.
struct StepInput {
  nn::Mat d_rows;                  // n_tracks x h_max snapshot at time t
  std::vector<int> symbols;        // per track: kind + 1
  std::vector<env::Pos> positions; // per track
  std::vector<bool> alive;
  env::Pos agent;
  bool agent_alive = true;
  bool has_message = false;
  int t = 0;
};

StepInput make_step_input(const env::Observation& obs, const TemporalArray& D);

// Grounds sentences to entities by attention over movement-aware queries and
// produces the language-conditioned observation feature x_t.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, nn::ParamStore& store, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  // Sentence-side tensors for one manual; reusable across an episode.
  struct SentenceCtx {
    nn::Var projected;  // n_sent x d_s
    nn::Var keys;       // n_sent x d
    nn::Var values;     // n_sent x d_val
  };
  SentenceCtx sentences(nn::Tape& t, const nn::Mat& embeddings) const;

  // Learned d_enc -> d_s map (bias-free); the only trainable path touching
  // the frozen sentence embeddings.
  nn::Var project(nn::Tape& t, const nn::Mat& embeddings) const;

  // Encodes T steps that share one manual; returns a T x d_x feature matrix.
  nn::Var encode_sequence(nn::Tape& t, const SentenceCtx& ctx,
                          const std::vector<StepInput>& steps) const;

  nn::Var encode(nn::Tape& t, const SentenceCtx& ctx,
                 const StepInput& step) const;

  // Attention rows (n_tracks x n_sent) for diagnostics; no gradients.
  nn::Mat attention_scores(const nn::Mat& embeddings,
                           const StepInput& step) const;

 private:
  nn::Var queries(nn::Tape& t, const std::vector<StepInput>& steps) const;

  EncoderConfig cfg_;
  nn::Param* sym_emb_;     // (kinds + 2 agent states) x d_sb
  nn::Param* time_emb_;    // h_max x d_time
  nn::Param* sent_proj_;   // d_enc x d_s
  nn::Param* w_v_;         // d_s x d_val
  nn::Param* agent_proj_;  // d_sb x d_val
  nn::Param* conv1_k_;
  nn::Param* conv1_b_;
  nn::Param* conv2_k_;
  nn::Param* conv2_b_;
  nn::Mlp query_mlp_;
  nn::Mlp key_mlp_;
  nn::Mlp out_mlp_;
};

}  // namespace courier::led
