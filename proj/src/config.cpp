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

#include "courier/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace courier::harness {

namespace {

// Single source of truth for the key set: both the parser and the printer
// walk the same field list.
template <typename C, typename V>
void visit_fields(C& c, V&& v) {
  v("stage", c.stage);
  v("seed", c.seed);
  v("env_steps", c.env_steps);
  v("batch_size", c.batch_size);
  v("batch_length", c.batch_length);
  v("wm_lr", c.wm_lr);
  v("wm_grad_norm", c.wm_grad_norm);
  v("actor_lr", c.actor_lr);
  v("actor_grad_norm", c.actor_grad_norm);
  v("critic_lr", c.critic_lr);
  v("critic_grad_norm", c.critic_grad_norm);
  v("beta_pred", c.beta_pred);
  v("beta_dyn", c.beta_dyn);
  v("beta_rep", c.beta_rep);
  v("unimix", c.unimix);
  v("free_nats", c.free_nats);
  v("pred_horizon", c.pred_horizon);
  v("msl_lambda", c.msl_lambda);
  v("truncate_msl_grads", c.truncate_msl_grads);
  v("d_s", c.d_s);
  v("d_sb", c.d_sb);
  v("d", c.d);
  v("d_val", c.d_val);
  v("h_dim", c.h_dim);
  v("d_enc", c.d_enc);
  v("d_time", c.d_time);
  v("d_x", c.d_x);
  v("mlp_hidden", c.mlp_hidden);
  v("mlp_layers", c.mlp_layers);
  v("cnn_c1", c.cnn_c1);
  v("cnn_c2", c.cnn_c2);
  v("z_groups", c.z_groups);
  v("z_classes", c.z_classes);
  v("reward_bins", c.reward_bins);
  v("N", c.N);
  v("H", c.H);
  v("thres", c.thres);
  v("grid_h", c.grid_h);
  v("grid_w", c.grid_w);
  v("replay_capacity", c.replay_capacity);
  v("replay_alpha", c.replay_alpha);
  v("replay_error_clip", c.replay_error_clip);
  v("gamma", c.gamma);
  v("lambda", c.lambda);
  v("entropy", c.entropy);
  v("action_unimix", c.action_unimix);
  v("imag_horizon", c.imag_horizon);
  v("retnorm_decay", c.retnorm_decay);
  v("imag_batch", c.imag_batch);
  v("prefill", c.prefill);
  v("updates_per_episode", c.updates_per_episode);
  v("policy_updates_per_wm", c.policy_updates_per_wm);
  v("eval_every", c.eval_every);
  v("eval_episodes", c.eval_episodes);
  v("checkpoint_every", c.checkpoint_every);
  v("log_every", c.log_every);
  v("text_backend", c.text_backend);
  v("embed_cache", c.embed_cache);
  v("finetune_steps", c.finetune_steps);
  v("finetune_traj", c.finetune_traj);
}

void assign(const std::string& key, const std::string& raw, std::string& f) {
  (void)key;
  f = raw;
}

template <typename T>
void assign_num(const std::string& key, const std::string& raw, T& f) {
  std::istringstream ss(raw);
  long double v;
  ss >> v;
  if (ss.fail() || !(ss >> std::ws).eof())
    throw ConfigError("bad numeric value for " + key + ": '" + raw + "'");
  f = static_cast<T>(v);
}

void assign(const std::string& key, const std::string& raw, double& f) {
  assign_num(key, raw, f);
}
void assign(const std::string& key, const std::string& raw, int& f) {
  assign_num(key, raw, f);
}
void assign(const std::string& key, const std::string& raw, std::int64_t& f) {
  assign_num(key, raw, f);
}
void assign(const std::string& key, const std::string& raw,
            std::uint64_t& f) {
  assign_num(key, raw, f);
}
void assign(const std::string& key, const std::string& raw, bool& f) {
  if (raw == "true" || raw == "1")
    f = true;
  else if (raw == "false" || raw == "0")
    f = false;
  else
    throw ConfigError("bad boolean value for " + key + ": '" + raw + "'");
}

std::string render(const std::string& f) { return f; }
std::string render(bool f) { return f ? "true" : "false"; }
std::string render(double f) {
  std::ostringstream ss;
  ss.precision(17);
  ss << f;
  return ss.str();
}
template <typename T>
std::string render(T f) {
  return std::to_string(f);
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

struct StageDefaults {
  int n;
  int h;
  double thres;  // NaN when finetuning does not apply
};

StageDefaults stage_defaults(env::Stage s) {
  switch (s) {
    case env::Stage::S1: return {3, 4, -1.0};
    case env::Stage::S2: return {3, 32, 1.2};
    case env::Stage::S2dev: return {3, 32, 1.2};
    case env::Stage::S3: return {5, 32, 1.4};
    case env::Stage::WM: return {3, 32, -1.0};
  }
  throw ConfigError("unknown stage");
}

}  // namespace

env::Stage RunConfig::stage_enum() const {
  return env::stage_from_string(stage);
}

int RunConfig::effective_N() const {
  return N >= 0 ? N : stage_defaults(stage_enum()).n;
}

int RunConfig::effective_H() const {
  return H >= 0 ? H : stage_defaults(stage_enum()).h;
}

double RunConfig::effective_thres() const {
  return thres >= 0 ? thres : stage_defaults(stage_enum()).thres;
}

void RunConfig::validate() const {
  StageDefaults sd = stage_defaults(stage_enum());
  if (N >= 0 && N != sd.n)
    throw ConfigError("N=" + std::to_string(N) + " conflicts with stage " +
                      stage + " (expected " + std::to_string(sd.n) + ")");
  if (H >= 0 && H != sd.h)
    throw ConfigError("H=" + std::to_string(H) + " conflicts with stage " +
                      stage + " (expected " + std::to_string(sd.h) + ")");
  auto pos = [](double v, const char* name) {
    if (!(v > 0)) throw ConfigError(std::string(name) + " must be positive");
  };
  pos(batch_size, "batch_size");
  pos(batch_length, "batch_length");
  pos(wm_lr, "wm_lr");
  pos(wm_grad_norm, "wm_grad_norm");
  pos(actor_lr, "actor_lr");
  pos(critic_lr, "critic_lr");
  pos(d_s, "d_s");
  pos(d_sb, "d_sb");
  pos(d, "d");
  pos(d_val, "d_val");
  pos(h_dim, "h_dim");
  pos(d_enc, "d_enc");
  pos(d_x, "d_x");
  pos(mlp_hidden, "mlp_hidden");
  pos(mlp_layers, "mlp_layers");
  pos(z_groups, "z_groups");
  pos(z_classes, "z_classes");
  pos(pred_horizon, "pred_horizon");
  pos(static_cast<double>(env_steps), "env_steps");
  pos(imag_horizon, "imag_horizon");
  pos(replay_capacity, "replay_capacity");
  if (unimix < 0 || unimix >= 1) throw ConfigError("unimix must be in [0,1)");
  if (free_nats < 0) throw ConfigError("free_nats must be >= 0");
  if (beta_dyn < 0 || beta_rep < 0 || beta_pred < 0)
    throw ConfigError("loss weights must be >= 0");
  if (gamma <= 0 || gamma > 1) throw ConfigError("gamma must be in (0,1]");
  if (lambda < 0 || lambda > 1) throw ConfigError("lambda must be in [0,1]");
  if (grid_h < 3 || grid_w < 3) throw ConfigError("grid too small");
  if (replay_alpha < 0 || replay_alpha > 1)
    throw ConfigError("replay_alpha must be in [0,1]");
  if (text_backend != "fallback" && text_backend != "pretrained")
    throw ConfigError("unknown text_backend: " + text_backend);
  int h = H >= 0 ? H : sd.h;
  if (batch_length < h + 1)
    throw ConfigError("batch_length must cover a full episode (H+1)");
}

led::EncoderConfig RunConfig::encoder_config() const {
  StageDefaults sd = stage_defaults(stage_enum());
  led::EncoderConfig e;
  e.grid_h = grid_h;
  e.grid_w = grid_w;
  e.h_max = (H >= 0 ? H : sd.h) + 1;  // time indices 0..H inclusive
  e.d_enc = d_enc;
  e.d_s = d_s;
  e.d_sb = d_sb;
  e.d = d;
  e.d_val = d_val;
  e.d_time = d_time;
  e.mlp_hidden = mlp_hidden;
  e.mlp_layers = mlp_layers;
  e.cnn_c1 = cnn_c1;
  e.cnn_c2 = cnn_c2;
  e.d_x = d_x;
  return e;
}

wm::WmConfig RunConfig::wm_config() const {
  wm::WmConfig w;
  w.d_x = d_x;
  w.h_dim = h_dim;
  w.z_groups = z_groups;
  w.z_classes = z_classes;
  w.num_actions = env::kNumActions;
  w.mlp_hidden = mlp_hidden;
  w.mlp_layers = mlp_layers;
  w.unimix = unimix;
  w.free_nats = free_nats;
  w.beta_pred = beta_pred;
  w.beta_dyn = beta_dyn;
  w.beta_rep = beta_rep;
  w.msl_lambda = msl_lambda;
  w.pred_horizon = pred_horizon;
  w.truncate_msl_grads = truncate_msl_grads;
  w.reward_bins = reward_bins;
  return w;
}

agent::AcConfig RunConfig::ac_config() const {
  agent::AcConfig a;
  a.horizon = imag_horizon;
  a.gamma = gamma;
  a.lambda = lambda;
  a.entropy = entropy;
  a.action_unimix = action_unimix;
  a.actor_lr = actor_lr;
  a.critic_lr = critic_lr;
  a.grad_clip = actor_grad_norm;
  a.retnorm_decay = retnorm_decay;
  a.mlp_hidden = mlp_hidden;
  a.mlp_layers = mlp_layers;
  a.value_bins = reward_bins;
  return a;
}

replay::ReplayConfig RunConfig::replay_config() const {
  replay::ReplayConfig r;
  r.capacity = static_cast<std::size_t>(replay_capacity);
  r.alpha = replay_alpha;
  r.error_clip = replay_error_clip;
  return r;
}

std::string RunConfig::to_string() const {
  std::map<std::string, std::string> kv;
  visit_fields(*this, [&kv](const char* key, const auto& field) {
    kv[key] = render(field);
  });
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  return out.str();
}

namespace {

void set_key(RunConfig& cfg, const std::string& key, const std::string& val) {
  bool found = false;
  visit_fields(cfg, [&](const char* k, auto& field) {
    if (key == k) {
      assign(key, val, field);
      found = true;
    }
  });
  if (!found) throw ConfigError("unknown config key: " + key);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        " is not key = value: '" + line + "'");
    set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& kvs) {
  for (const std::string& kv : kvs) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw UsageError("override must be key=value: '" + kv + "'");
    std::string k = trim(kv.substr(0, eq));
    std::string v = trim(kv.substr(eq + 1));
    set_key(cfg, k, v);
  }
  cfg.validate();
}

}  // namespace courier::harness
