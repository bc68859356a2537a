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

#include "courier/harness/checkpoint.hpp"

#include <fstream>

#include "courier/io.hpp"
#include "json.hpp"

namespace courier::harness {

namespace {

constexpr std::uint32_t kMagic = 0x504b4343;  // "CCKP"
constexpr std::uint32_t kVersion = 1;

std::uint64_t mat_checksum(const nn::Mat& m) {
  return fnv1a64(std::string_view(
      reinterpret_cast<const char*>(m.data()),
      static_cast<std::size_t>(m.size()) * sizeof(double)));
}

void write_counters(io::BinWriter& w, const TrainCounters& c) {
  w.i64(c.env_steps);
  w.i64(c.episodes);
  w.i64(c.wm_updates);
  w.i64(c.policy_updates);
  w.f64(c.ret_range);
  w.i64(c.wm_opt_t);
  w.i64(c.actor_opt_t);
  w.i64(c.critic_opt_t);
  w.i64(c.evals_done);
  w.i64(c.ckpts_done);
}

TrainCounters read_counters(io::BinReader& r) {
  TrainCounters c;
  c.env_steps = r.i64();
  c.episodes = r.i64();
  c.wm_updates = r.i64();
  c.policy_updates = r.i64();
  c.ret_range = r.f64();
  c.wm_opt_t = r.i64();
  c.actor_opt_t = r.i64();
  c.critic_opt_t = r.i64();
  c.evals_done = r.i64();
  c.ckpts_done = r.i64();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, nn::ParamStore& store,
                     const TrainCounters& counters,
                     const std::string& config_echo) {
  io::BinWriter w(path);
  w.u32(kMagic);
  w.u32(kVersion);
  w.str(config_echo);
  write_counters(w, counters);
  std::vector<nn::Param*> params = store.all();
  w.u64(params.size());
  nlohmann::json tensors = nlohmann::json::array();
  for (nn::Param* p : params) {
    w.str(p->name);
    w.mat(p->value);
    w.mat(p->adam_m);
    w.mat(p->adam_v);
    tensors.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"fnv64", mat_checksum(p->value)}});
  }
  w.close();

  nlohmann::json manifest;
  manifest["schema"] = "courier.ckpt.v1";
  manifest["counters"] = {{"env_steps", counters.env_steps},
                          {"episodes", counters.episodes},
                          {"wm_updates", counters.wm_updates},
                          {"policy_updates", counters.policy_updates}};
  manifest["tensors"] = tensors;
  std::ofstream mj(path + ".json");
  if (!mj) throw IoError("cannot write checkpoint manifest");
  mj << manifest.dump(2) << "\n";
}

std::string load_checkpoint(const std::string& path, nn::ParamStore& store,
                            TrainCounters* counters) {
  io::BinReader r(path);
  if (r.u32() != kMagic) throw IoError("not a checkpoint file: " + path);
  if (r.u32() != kVersion) throw IoError("unsupported checkpoint version");
  std::string echo = r.str();
  TrainCounters c = read_counters(r);
  if (counters) *counters = c;
  std::uint64_t n = r.u64();
  if (n != store.count())
    throw ConfigError("checkpoint tensor count mismatch: file has " +
                      std::to_string(n) + ", model has " +
                      std::to_string(store.count()));
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.str();
    if (!store.contains(name))
      throw ConfigError("checkpoint tensor not in model: " + name);
    nn::Param& p = store.get(name);
    nn::Mat value = r.mat(), m = r.mat(), v = r.mat();
    if (value.rows() != p.value.rows() || value.cols() != p.value.cols())
      throw ConfigError("checkpoint tensor shape mismatch: " + name);
    p.value = std::move(value);
    p.adam_m = std::move(m);
    p.adam_v = std::move(v);
  }
  return echo;
}

std::string peek_checkpoint_config(const std::string& path) {
  io::BinReader r(path);
  if (r.u32() != kMagic) throw IoError("not a checkpoint file: " + path);
  if (r.u32() != kVersion) throw IoError("unsupported checkpoint version");
  return r.str();
}

}  // namespace courier::harness
