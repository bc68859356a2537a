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

#include "courier/cli.hpp"

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "courier/harness/stats.hpp"
#include "courier/harness/trainer.hpp"
#include "json.hpp"

namespace courier {

namespace {

using harness::Models;
using harness::RunConfig;
using harness::TrainCounters;
using nn::Mat;

std::unique_ptr<Models> models_from_checkpoint(const std::string& path,
                                               TrainCounters* counters) {
  RunConfig cfg =
      harness::parse_run_config(harness::peek_checkpoint_config(path));
  auto m = std::make_unique<Models>(cfg);
  harness::load_checkpoint(path, m->store, counters);
  return m;
}

std::unique_ptr<Models> models_from_flags(const std::string& checkpoint,
                                          const std::string& config,
                                          TrainCounters* counters) {
  if (!checkpoint.empty()) return models_from_checkpoint(checkpoint, counters);
  if (!config.empty())
    return std::make_unique<Models>(harness::load_run_config(config));
  throw UsageError("either --checkpoint or --config is required");
}

void cmd_gen_split(const std::string& stage, const std::string& split,
                   int count, std::uint64_t seed, const std::string& out,
                   int grid_h, int grid_w) {
  env::Stage st = env::stage_from_string(stage);
  env::Split sp = env::split_from_string(split);
  env::SplitManifest m;
  m.stage = st;
  m.split = sp;
  m.seed = seed;
  m.vocab = env::vocab_fingerprint();
  m.configs = env::generate_split(st, sp, count, seed);
  for (env::GameConfig& g : m.configs) {
    g.grid_h = grid_h;
    g.grid_w = grid_w;
    env::validate_config(g);
  }
  std::string err = env::check_split(m);
  if (!err.empty())
    throw GenerationError("generated split failed its own check: " + err);
  env::write_split_manifest(out, m);
  std::cout << "wrote " << m.configs.size() << " " << stage << "/" << split
            << " games to " << out << "\n";
}

void cmd_train(const std::string& config, const std::string& train_manifest,
               const std::string& dev_manifest, const std::string& out,
               std::optional<std::uint64_t> seed,
               const std::vector<std::string>& overrides,
               const std::string& resume) {
  RunConfig cfg;
  if (!resume.empty()) {
    cfg = harness::parse_run_config(harness::peek_checkpoint_config(resume));
  } else if (!config.empty()) {
    cfg = harness::load_run_config(config);
  } else {
    throw UsageError("train needs --config (or --resume)");
  }
  harness::apply_overrides(cfg, overrides);
  if (seed) {
    cfg.seed = *seed;
    cfg.validate();
  }
  env::SplitManifest train = env::read_split_manifest(train_manifest);
  std::optional<env::SplitManifest> dev;
  if (!dev_manifest.empty()) dev = env::read_split_manifest(dev_manifest);
  harness::Trainer trainer(cfg, std::move(train), std::move(dev), out);
  if (!resume.empty()) trainer.resume_from(resume);
  trainer.run();
  std::cout << "trained to " << trainer.counters().env_steps
            << " env steps (" << trainer.counters().wm_updates
            << " updates)\n";
}

void cmd_eval(const std::string& checkpoint, const std::string& config,
              const std::string& manifest_path, const std::string& metric,
              int episodes, int trials, int games, const std::string& out) {
  TrainCounters counters;
  std::unique_ptr<Models> m =
      models_from_flags(checkpoint, config, &counters);
  env::SplitManifest manifest = env::read_split_manifest(manifest_path);

  harness::MetricsRecord rec;
  rec.step = counters.env_steps;
  rec.kind = "eval";
  rec.split = to_string(manifest.split);
  rec.seed = m->cfg.seed;
  if (metric == "win_rate") {
    rec.win_rate = harness::eval_win_rate(*m, manifest, episodes);
    std::cout << "win_rate " << *rec.win_rate << " over " << episodes
              << " episodes\n";
  } else if (metric == "avg_scores") {
    harness::EvalScores scores =
        harness::eval_avg_scores(*m, manifest, trials, games);
    rec.avg_sum_scores = scores.mean;
    if (scores.by_game.size() >= 2) {
      Rng rng = Rng(manifest.seed).fork("ci");
      auto [lo, hi] = harness::hierarchical_bootstrap_ci(scores.by_game, 0.95,
                                                         1000, rng);
      rec.ci_lo = lo;
      rec.ci_hi = hi;
      std::cout << "avg_sum_scores " << scores.mean << " (95% CI " << lo
                << " .. " << hi << ") over " << scores.by_game.size()
                << " games x " << trials << " trials\n";
    } else {
      std::cout << "avg_sum_scores " << scores.mean << "\n";
    }
  } else {
    throw UsageError("unknown metric: " + metric);
  }
  if (!out.empty()) {
    harness::MetricsWriter w;
    w.open(out, m->cfg.to_string(), m->cfg.seed);
    w.write(rec);
  }
}

void cmd_finetune(const std::string& checkpoint, const std::string& game_path,
                  int index, double thres_flag, const std::string& out,
                  std::uint64_t seed) {
  TrainCounters counters;
  std::unique_ptr<Models> m = models_from_checkpoint(checkpoint, &counters);
  env::SplitManifest manifest = env::read_split_manifest(game_path);
  if (index < 0 || index >= static_cast<int>(manifest.configs.size()))
    throw UsageError("--index out of range for " + game_path);
  const env::GameConfig& game =
      manifest.configs[static_cast<std::size_t>(index)];

  double thres = thres_flag >= 0 ? thres_flag : m->cfg.effective_thres();
  if (thres < 0)
    throw UsageError("stage has no finetune threshold; pass --thres");

  Rng root = Rng(m->cfg.seed).fork("finetune", seed,
                                   static_cast<std::uint64_t>(index));
  env::GameState st =
      env::new_game(game, root.fork("layout").next());
  env::Observation obs0 = env::observe(st);
  Mat emb = m->manual_embeddings(game.manual);

  agent::FinetuneConfig fcfg;
  fcfg.steps = m->cfg.finetune_steps;
  fcfg.traj_per_step = m->cfg.finetune_traj;
  fcfg.horizon = game.horizon;
  Rng frng = root.fork("opt");
  agent::FinetuneStats stats = agent::finetune(
      *m->wm, *m->ac, *m->enc, emb, obs0, thres, fcfg, m->store, frng);
  std::cout << "estimated return " << stats.v_hat << " vs threshold " << thres
            << (stats.early_exit ? " -> kept policy unchanged"
                                 : " -> adapted policy")
            << " (" << stats.steps_run << " steps, "
            << stats.trajectories_generated << " trajectories)\n";

  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::string path = out + "/ckpt_finetuned.bin";
    harness::save_checkpoint(path, m->store, counters, m->cfg.to_string());
    harness::MetricsWriter w;
    w.open(out + "/metrics.jsonl", m->cfg.to_string(), m->cfg.seed);
    harness::MetricsRecord rec;
    rec.step = counters.env_steps;
    rec.kind = "finetune";
    rec.split = to_string(manifest.split);
    rec.seed = m->cfg.seed;
    rec.avg_sum_scores = std::clamp(stats.v_hat, -1.0, 1.5);
    w.write(rec);
    std::cout << "wrote " << path << "\n";
  }
}

void cmd_rollout(const std::string& checkpoint, const std::string& config,
                 const std::string& manifest_path, int index,
                 std::uint64_t seed, bool greedy, const std::string& out) {
  TrainCounters counters;
  std::unique_ptr<Models> m =
      models_from_flags(checkpoint, config, &counters);
  env::SplitManifest manifest = env::read_split_manifest(manifest_path);
  if (index < 0 || index >= static_cast<int>(manifest.configs.size()))
    throw UsageError("--index out of range for " + manifest_path);
  const env::GameConfig& game =
      manifest.configs[static_cast<std::size_t>(index)];

  Rng stream = Rng(manifest.seed).fork("rollout", seed);
  std::uint64_t game_seed = stream.fork("layout").next();
  harness::RolloutResult r =
      harness::run_episode(*m, game, game_seed, stream, greedy);

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw IoError("cannot open " + out);
    os = &file;
  }
  const replay::EpisodeRecord& e = r.record;
  for (std::size_t t = 0; t < e.obs.size(); ++t) {
    nlohmann::json j;
    j["t"] = e.obs[t].t;
    j["agent"] = {e.obs[t].agent.y, e.obs[t].agent.x};
    j["has_message"] = e.obs[t].has_message;
    nlohmann::json tracks = nlohmann::json::array();
    for (const env::TrackObs& tr : e.obs[t].tracks)
      tracks.push_back({{"symbol", tr.symbol},
                        {"pos", {tr.pos.y, tr.pos.x}},
                        {"alive", tr.alive}});
    j["tracks"] = tracks;
    if (t < e.actions.size()) j["action"] = to_string(
        static_cast<env::Action>(e.actions[t]));
    j["reward"] = e.rewards[t];
    (*os) << j.dump() << "\n";
  }
  nlohmann::json fin;
  fin["return"] = r.ret;
  fin["won"] = r.won;
  (*os) << fin.dump() << "\n";
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"language-conditioned world-model agent for grid games"};
  app.require_subcommand(1);

  // gen-split
  auto* gen = app.add_subcommand(
      "gen-split", "generate a game-split manifest (JSONL)");
  std::string gs_stage, gs_split, gs_out;
  int gs_count = 100, gs_grid_h = 10, gs_grid_w = 10;
  std::uint64_t gs_seed = 0;
  gen->add_option("--stage", gs_stage, "s1|s2|s2dev|s3|wm")->required();
  gen->add_option("--split", gs_split,
                  "train|dev|new_combo|new_attr|new_all|test")
      ->required();
  gen->add_option("--count", gs_count, "number of games")->required();
  gen->add_option("--seed", gs_seed, "generation seed");
  gen->add_option("--out", gs_out, "output manifest path")->required();
  gen->add_option("--grid-h", gs_grid_h, "grid height");
  gen->add_option("--grid-w", gs_grid_w, "grid width");

  // train
  auto* train = app.add_subcommand("train", "train world model and policy");
  std::string tr_config, tr_train, tr_dev, tr_out, tr_resume;
  std::vector<std::string> tr_set;
  std::optional<std::uint64_t> tr_seed;
  train->add_option("--config", tr_config, "run config file");
  train->add_option("--train-manifest", tr_train, "training games")
      ->required();
  train->add_option("--dev-manifest", tr_dev, "dev evaluation games");
  train->add_option("--out", tr_out, "output directory")->required();
  train->add_option("--seed", tr_seed, "override config seed");
  train->add_option("--set", tr_set, "config overrides key=value");
  train->add_option("--resume", tr_resume, "checkpoint to resume from");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a policy on a split");
  std::string ev_ckpt, ev_config, ev_manifest, ev_metric = "win_rate", ev_out;
  int ev_episodes = 1000, ev_trials = 60, ev_games = 0;
  eval->add_option("--checkpoint", ev_ckpt, "trained checkpoint");
  eval->add_option("--config", ev_config,
                   "config for a freshly initialized policy");
  eval->add_option("--manifest", ev_manifest, "evaluation games")->required();
  eval->add_option("--metric", ev_metric, "win_rate|avg_scores");
  eval->add_option("--episodes", ev_episodes, "episodes for win_rate");
  eval->add_option("--trials", ev_trials, "trials per game for avg_scores");
  eval->add_option("--games", ev_games, "game cap for avg_scores (0 = all)");
  eval->add_option("--out", ev_out, "metrics output file");

  // finetune
  auto* ft = app.add_subcommand(
      "finetune", "adapt the policy to one game inside the world model");
  std::string ft_ckpt, ft_game, ft_out;
  int ft_index = 0;
  double ft_thres = -1.0;
  std::uint64_t ft_seed = 0;
  ft->add_option("--checkpoint", ft_ckpt, "trained checkpoint")->required();
  ft->add_option("--game", ft_game, "manifest holding the target game")
      ->required();
  ft->add_option("--index", ft_index, "game index within the manifest");
  ft->add_option("--thres", ft_thres,
                 "return threshold (default: stage table)");
  ft->add_option("--out", ft_out, "output directory");
  ft->add_option("--seed", ft_seed, "finetune stream seed");

  // rollout
  auto* ro = app.add_subcommand("rollout", "play one episode and dump it");
  std::string ro_ckpt, ro_config, ro_manifest, ro_out;
  int ro_index = 0;
  std::uint64_t ro_seed = 0;
  bool ro_sample = false;
  ro->add_option("--checkpoint", ro_ckpt, "trained checkpoint");
  ro->add_option("--config", ro_config,
                 "config for a freshly initialized policy");
  ro->add_option("--manifest", ro_manifest, "game manifest")->required();
  ro->add_option("--index", ro_index, "game index");
  ro->add_option("--seed", ro_seed, "episode seed");
  ro->add_flag("--sample", ro_sample, "sample actions instead of argmax");
  ro->add_option("--out", ro_out, "output JSONL path (default stdout)");

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      cmd_gen_split(gs_stage, gs_split, gs_count, gs_seed, gs_out, gs_grid_h,
                    gs_grid_w);
    if (train->parsed())
      cmd_train(tr_config, tr_train, tr_dev, tr_out, tr_seed, tr_set,
                tr_resume);
    if (eval->parsed())
      cmd_eval(ev_ckpt, ev_config, ev_manifest, ev_metric, ev_episodes,
               ev_trials, ev_games, ev_out);
    if (ft->parsed())
      cmd_finetune(ft_ckpt, ft_game, ft_index, ft_thres, ft_out, ft_seed);
    if (ro->parsed())
      cmd_rollout(ro_ckpt, ro_config, ro_manifest, ro_index, ro_seed,
                  !ro_sample, ro_out);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace courier
