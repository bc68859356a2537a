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

#include "courier/harness/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>

namespace courier::harness {

namespace {

std::vector<nn::Param*> wm_params(nn::ParamStore& store) {
  std::vector<nn::Param*> out = store.with_prefix("enc.");
  for (nn::Param* p : store.with_prefix("wm.")) out.push_back(p);
  return out;
}

// Rebuilds the encoder step inputs for a stored episode, padded to `length`
// by repeating the terminal observation.
std::vector<led::StepInput> steps_for_episode(const replay::EpisodeRecord& e,
                                              int length, int h_max) {
  std::vector<led::StepInput> steps;
  led::TemporalArray D;
  int n_tracks = static_cast<int>(e.obs[0].tracks.size());
  D.reset(n_tracks, h_max);
  int real = std::min(length, static_cast<int>(e.obs.size()));
  for (int t = 0; t < real; ++t) {
    const env::Observation& o = e.obs[static_cast<std::size_t>(t)];
    if (t > 0) {
      const env::Observation& prev = e.obs[static_cast<std::size_t>(t - 1)];
      std::vector<env::Pos> cur_p, prev_p;
      std::vector<bool> cur_a, prev_a;
      for (const env::TrackObs& tr : o.tracks) {
        cur_p.push_back(tr.pos);
        cur_a.push_back(tr.alive);
      }
      for (const env::TrackObs& tr : prev.tracks) {
        prev_p.push_back(tr.pos);
        prev_a.push_back(tr.alive);
      }
      led::update_temporal(D, cur_p, cur_a, prev_p, prev_a, o.agent, t);
    }
    steps.push_back(led::make_step_input(o, D));
  }
  while (static_cast<int>(steps.size()) < length) steps.push_back(steps.back());
  return steps;
}

}  // namespace

Models::Models(const RunConfig& config) : cfg(config) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).fork("params");
  enc = std::make_unique<led::Encoder>(cfg.encoder_config(), store, rng);
  wm = std::make_unique<wm::WorldModel>(cfg.wm_config(), store, rng);
  ac = std::make_unique<agent::ActorCritic>(cfg.ac_config(), cfg.wm_config(),
                                            store, rng);
  text = text::make_encoder(cfg.text_backend, cfg.d_enc, cfg.embed_cache,
                            /*allow_fallback_on_miss=*/true);
}

Mat Models::manual_embeddings(const env::Manual& m) const {
  std::vector<text::SentenceEmbedding> embs = text->embed_manual(m);
  Mat out(static_cast<int>(embs.size()), text->dim());
  for (std::size_t i = 0; i < embs.size(); ++i)
    for (int j = 0; j < text->dim(); ++j)
      out(static_cast<int>(i), j) = embs[i].vector[static_cast<std::size_t>(j)];
  return out;
}

RolloutResult run_episode(Models& m, const env::GameConfig& game,
                          std::uint64_t game_seed, const Rng& stream,
                          bool greedy) {
  Mat emb = m.manual_embeddings(game.manual);
  agent::PolicyRuntime runtime(m.enc.get(), m.wm.get(), m.ac.get(), emb);
  env::GameState state = env::new_game(game, game_seed);

  RolloutResult out;
  out.record.obs.push_back(env::observe(state));
  out.record.rewards.push_back(0.0);
  while (!state.terminated) {
    int action = runtime.act(out.record.obs.back(), greedy, stream);
    env::StepResult sr = env::step(state, static_cast<env::Action>(action));
    out.record.actions.push_back(action);
    out.record.rewards.push_back(sr.reward);
    out.record.obs.push_back(env::observe(state));
  }
  out.record.continues.assign(out.record.obs.size(), 1.0);
  out.record.continues.back() = 0.0;
  out.record.ret = state.ret;
  out.record.sentence_embeddings = std::move(emb);
  out.won = state.won;
  out.ret = state.ret;
  return out;
}

double eval_win_rate(Models& m, const env::SplitManifest& manifest,
                     int episodes) {
  if (manifest.configs.empty()) throw UsageError("empty evaluation manifest");
  if (episodes <= 0) throw UsageError("episodes must be positive");
  int games = static_cast<int>(manifest.configs.size());
  Rng base(manifest.seed);
  int wins = 0;
  for (int i = 0; i < episodes; ++i) {
    int g = i % games;
    int trial = i / games;
    Rng stream = base.fork("eval", static_cast<std::uint64_t>(g),
                           static_cast<std::uint64_t>(trial));
    std::uint64_t game_seed = stream.fork("layout").next();
    RolloutResult r =
        run_episode(m, manifest.configs[static_cast<std::size_t>(g)],
                    game_seed, stream, /*greedy=*/true);
    if (r.won) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(episodes);
}

EvalScores eval_avg_scores(Models& m, const env::SplitManifest& manifest,
                           int trials, int max_games) {
  if (manifest.configs.empty()) throw UsageError("empty evaluation manifest");
  if (trials <= 0) throw UsageError("trials must be positive");
  int games = std::min<int>(
      static_cast<int>(manifest.configs.size()),
      max_games > 0 ? max_games : std::numeric_limits<int>::max());
  Rng base(manifest.seed);
  EvalScores out;
  int wins = 0;
  double mean_acc = 0.0;
  for (int g = 0; g < games; ++g) {
    std::vector<double> scores;
    for (int trial = 0; trial < trials; ++trial) {
      Rng stream = base.fork("eval", static_cast<std::uint64_t>(g),
                             static_cast<std::uint64_t>(trial));
      std::uint64_t game_seed = stream.fork("layout").next();
      RolloutResult r =
          run_episode(m, manifest.configs[static_cast<std::size_t>(g)],
                      game_seed, stream, /*greedy=*/true);
      scores.push_back(r.ret);
      if (r.won) ++wins;
    }
    double game_mean = 0.0;
    for (double s : scores) game_mean += s;
    mean_acc += game_mean / static_cast<double>(trials);
    out.by_game.push_back(std::move(scores));
  }
  out.mean = mean_acc / static_cast<double>(games);
  out.win_rate =
      static_cast<double>(wins) / static_cast<double>(games * trials);
  return out;
}

Trainer::Trainer(const RunConfig& cfg, env::SplitManifest train_manifest,
                 std::optional<env::SplitManifest> dev_manifest,
                 std::string out_dir)
    : cfg_(cfg),
      models_(cfg),
      train_manifest_(std::move(train_manifest)),
      dev_manifest_(std::move(dev_manifest)),
      out_dir_(std::move(out_dir)),
      replay_(cfg.replay_config()),
      wm_opt_(wm_params(models_.store), cfg.wm_lr, cfg.wm_grad_norm),
      actor_opt_(models_.store.with_prefix("ac.actor"), cfg.actor_lr,
                 cfg.actor_grad_norm),
      critic_opt_(models_.store.with_prefix("ac.critic"), cfg.critic_lr,
                  cfg.critic_grad_norm),
      root_(Rng(cfg.seed).fork("train")) {
  if (train_manifest_.configs.empty())
    throw ConfigError("train manifest has no games");
  if (!out_dir_.empty()) {
    std::filesystem::create_directories(out_dir_);
    metrics_.open(out_dir_ + "/metrics.jsonl", cfg_.to_string(), cfg_.seed);
  }
}

void Trainer::resume_from(const std::string& ckpt_path) {
  std::string echo = load_checkpoint(ckpt_path, models_.store, &counters_);
  // The step budget is a stopping condition, not part of the model identity,
  // so a resumed run may extend it; everything else must match exactly.
  RunConfig echo_cfg = parse_run_config(echo);
  echo_cfg.env_steps = cfg_.env_steps;
  if (echo_cfg.to_string() != cfg_.to_string())
    throw ConfigError(
        "checkpoint was produced by a different config; rebuild the run "
        "config from the checkpoint echo");
  wm_opt_.set_t(counters_.wm_opt_t);
  actor_opt_.set_t(counters_.actor_opt_t);
  critic_opt_.set_t(counters_.critic_opt_t);
  std::string spill = ckpt_path + ".replay";
  if (std::filesystem::exists(spill)) replay_.load(spill);
}

RolloutResult Trainer::collect_one() {
  Rng rng_e = root_.fork("collect",
                         static_cast<std::uint64_t>(counters_.episodes));
  int game_idx = rng_e.fork("game").uniform_int(
      static_cast<int>(train_manifest_.configs.size()));
  std::uint64_t game_seed = rng_e.fork("layout").next();
  Rng stream = rng_e.fork("actions");
  RolloutResult r = run_episode(
      models_, train_manifest_.configs[static_cast<std::size_t>(game_idx)],
      game_seed, stream, /*greedy=*/false);
  replay_.add(r.record);
  counters_.env_steps += r.record.num_steps();
  counters_.episodes += 1;
  return r;
}

WmUpdateStats Trainer::wm_update() {
  Rng rng_u = root_.fork("wm",
                         static_cast<std::uint64_t>(counters_.wm_updates));
  Rng srng = rng_u.fork("sample");
  replay::SegmentBatch seg =
      replay_.sample(cfg_.batch_size, cfg_.batch_length, srng);
  int B = cfg_.batch_size, L = cfg_.batch_length;
  int h_max = models_.enc->config().h_max;

  nn::Tape tape;
  wm::WmBatch batch;
  WmUpdateStats stats;
  for (int b = 0; b < B; ++b) {
    const replay::EpisodeRecord& e = *seg.episodes[static_cast<std::size_t>(b)];
    led::Encoder::SentenceCtx ctx =
        models_.enc->sentences(tape, e.sentence_embeddings);
    std::vector<led::StepInput> steps = steps_for_episode(e, L, h_max);
    nn::Var x = models_.enc->encode_sequence(tape, ctx, steps);
    batch.x.push_back(x);
    stats.x_values.push_back(x.val());
  }
  batch.actions = seg.actions;
  batch.rewards = seg.rewards;
  batch.continues = seg.continues;
  batch.mask = seg.mask;
  batch.class_weight = seg.class_weight;
  batch.episode_ids = seg.episode_ids;

  Rng lrng = rng_u.fork("loss");
  wm::WmLossOut out = models_.wm->wm_loss(tape, batch, lrng);
  if (!std::isfinite(out.total_v)) {
    std::cerr << "FATAL: world-model loss diverged at update "
              << counters_.wm_updates << ": total=" << out.total_v
              << " pred=" << out.pred_v << " dyn=" << out.dyn_v
              << " rep=" << out.rep_v << "\n  episodes:";
    for (std::uint64_t id : batch.episode_ids) std::cerr << " " << id;
    std::cerr << std::endl;
    throw std::runtime_error("world-model loss is not finite");
  }
  tape.backward(out.total);
  stats.grad_norm = wm_opt_.step();
  replay_.update_priorities(batch.episode_ids, out.reward_nll);

  stats.total = out.total_v;
  stats.pred = out.pred_v;
  stats.dyn = out.dyn_v;
  stats.rep = out.rep_v;
  stats.actions = seg.actions;
  stats.mask = seg.mask;
  counters_.wm_updates += 1;
  return stats;
}

agent::PolicyLosses Trainer::policy_update_once(const WmUpdateStats& stats) {
  Rng prng = root_.fork("policy",
                        static_cast<std::uint64_t>(counters_.policy_updates));
  int B = static_cast<int>(stats.x_values.size());
  int L = static_cast<int>(stats.mask.cols());
  const wm::WorldModel& wm = *models_.wm;

  // Posterior chain over the freshly used batch (value level, post-update
  // parameters) collecting start states at every real step.
  std::vector<Mat> start_h, start_z;
  Mat h = wm.initial_h(B);
  for (int t = 0; t < L; ++t) {
    Mat x_t(B, models_.cfg.d_x);
    for (int b = 0; b < B; ++b)
      x_t.row(b) = stats.x_values[static_cast<std::size_t>(b)].row(t);
    Mat grouped = wm.posterior_probs_rows(h, x_t);
    std::vector<Rng> streams;
    for (int b = 0; b < B; ++b)
      streams.push_back(prng.fork("z", static_cast<std::uint64_t>(t),
                                  static_cast<std::uint64_t>(b)));
    Mat z = wm.sample_flat_rows(grouped, B, streams);
    for (int b = 0; b < B; ++b)
      if (stats.mask(b, t) > 0.0) {
        start_h.push_back(h.row(b));
        start_z.push_back(z.row(b));
      }
    std::vector<int> acts;
    for (int b = 0; b < B; ++b) acts.push_back(stats.actions(b, t));
    h = wm.step_rows(h, z, acts);
  }
  if (start_h.empty()) throw ConfigError("no unmasked steps in batch");

  // Subsample to the imagination batch size.
  std::vector<int> order(start_h.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng shuf = prng.fork("starts");
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1],
              order[static_cast<std::size_t>(shuf.uniform_int(static_cast<int>(i)))]);
  int n = std::min<int>(cfg_.imag_batch, static_cast<int>(order.size()));
  Mat H0(n, h.cols()), Z0(n, start_z[0].cols());
  for (int i = 0; i < n; ++i) {
    H0.row(i) = start_h[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    Z0.row(i) = start_z[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
  }

  Rng irng = prng.fork("imagine");
  agent::ImaginedRollout ro =
      agent::imagine(wm, *models_.ac, H0, Z0, cfg_.imag_horizon, irng);
  agent::PolicyLosses losses = agent::policy_update(
      *models_.ac, ro, actor_opt_, critic_opt_, counters_.ret_range);
  counters_.policy_updates += 1;
  return losses;
}

double Trainer::evaluate_dev() {
  if (!dev_manifest_) throw UsageError("no dev manifest configured");
  double rate = eval_win_rate(models_, *dev_manifest_, cfg_.eval_episodes);
  if (metrics_.is_open()) {
    MetricsRecord rec;
    rec.step = counters_.env_steps;
    rec.kind = "eval";
    rec.split = to_string(dev_manifest_->split);
    rec.seed = cfg_.seed;
    rec.win_rate = rate;
    metrics_.write(rec);
  }
  return rate;
}

std::string Trainer::save_now() {
  if (out_dir_.empty()) throw UsageError("trainer has no output directory");
  counters_.wm_opt_t = wm_opt_.t();
  counters_.actor_opt_t = actor_opt_.t();
  counters_.critic_opt_t = critic_opt_.t();
  std::string path =
      out_dir_ + "/ckpt_" + std::to_string(counters_.env_steps) + ".bin";
  save_checkpoint(path, models_.store, counters_, cfg_.to_string());
  replay_.save(path + ".replay");
  return path;
}

void Trainer::maybe_eval_and_checkpoint() {
  if (dev_manifest_ && cfg_.eval_every > 0) {
    std::int64_t mark = counters_.env_steps / cfg_.eval_every;
    if (mark > counters_.evals_done) {
      counters_.evals_done = mark;
      evaluate_dev();
    }
  }
  if (!out_dir_.empty() && cfg_.checkpoint_every > 0) {
    std::int64_t mark = counters_.env_steps / cfg_.checkpoint_every;
    if (mark > counters_.ckpts_done) {
      counters_.ckpts_done = mark;
      save_now();
    }
  }
}

void Trainer::run() {
  while (counters_.env_steps < cfg_.env_steps) {
    collect_one();
    bool warm = counters_.episodes >= cfg_.prefill && replay_.size() >= 2;
    if (warm) {
      for (int u = 0; u < cfg_.updates_per_episode; ++u) {
        WmUpdateStats stats = wm_update();
        agent::PolicyLosses pl{};
        for (int p = 0; p < cfg_.policy_updates_per_wm; ++p)
          pl = policy_update_once(stats);
        if (metrics_.is_open() && cfg_.log_every > 0 &&
            counters_.wm_updates % cfg_.log_every == 0) {
          MetricsRecord rec;
          rec.step = counters_.env_steps;
          rec.kind = "train";
          rec.split = to_string(train_manifest_.split);
          rec.seed = cfg_.seed;
          rec.loss_total = stats.total;
          rec.loss_pred = stats.pred;
          rec.loss_dyn = stats.dyn;
          rec.loss_rep = stats.rep;
          rec.wm_grad_norm = stats.grad_norm;
          rec.actor_loss = pl.actor;
          rec.critic_loss = pl.critic;
          rec.policy_entropy = pl.entropy;
          metrics_.write(rec);
        }
      }
    }
    maybe_eval_and_checkpoint();
  }
  if (dev_manifest_) evaluate_dev();
  if (!out_dir_.empty()) save_now();
}

}  // namespace courier::harness
