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

#include "courier/harness/metrics.hpp"

#include <filesystem>

#include "courier/common.hpp"

namespace courier::harness {

using nlohmann::json;

namespace {

constexpr const char* kSchema = "courier.metrics.v1";

void put_opt(json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}

std::optional<double> get_opt(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

json MetricsRecord::to_json() const {
  json j;
  j["step"] = step;
  j["kind"] = kind;
  j["split"] = split;
  j["seed"] = seed;
  put_opt(j, "win_rate", win_rate);
  put_opt(j, "avg_sum_scores", avg_sum_scores);
  put_opt(j, "ci_lo", ci_lo);
  put_opt(j, "ci_hi", ci_hi);
  put_opt(j, "loss_total", loss_total);
  put_opt(j, "loss_pred", loss_pred);
  put_opt(j, "loss_dyn", loss_dyn);
  put_opt(j, "loss_rep", loss_rep);
  put_opt(j, "actor_loss", actor_loss);
  put_opt(j, "critic_loss", critic_loss);
  put_opt(j, "policy_entropy", policy_entropy);
  put_opt(j, "wm_grad_norm", wm_grad_norm);
  return j;
}

MetricsRecord MetricsRecord::from_json(const json& j) {
  MetricsRecord r;
  r.step = j.at("step").get<std::int64_t>();
  r.kind = j.at("kind").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.win_rate = get_opt(j, "win_rate");
  r.avg_sum_scores = get_opt(j, "avg_sum_scores");
  r.ci_lo = get_opt(j, "ci_lo");
  r.ci_hi = get_opt(j, "ci_hi");
  r.loss_total = get_opt(j, "loss_total");
  r.loss_pred = get_opt(j, "loss_pred");
  r.loss_dyn = get_opt(j, "loss_dyn");
  r.loss_rep = get_opt(j, "loss_rep");
  r.actor_loss = get_opt(j, "actor_loss");
  r.critic_loss = get_opt(j, "critic_loss");
  r.policy_entropy = get_opt(j, "policy_entropy");
  r.wm_grad_norm = get_opt(j, "wm_grad_norm");
  return r;
}

void MetricsRecord::validate() const {
  if (step < 0) throw ConfigError("metrics: negative step");
  if (kind != "train" && kind != "eval" && kind != "finetune")
    throw ConfigError("metrics: unknown kind '" + kind + "'");
  if (win_rate && (*win_rate < 0.0 || *win_rate > 1.0))
    throw ConfigError("metrics: win_rate outside [0,1]");
  if (avg_sum_scores && (*avg_sum_scores < -1.0 || *avg_sum_scores > 1.5))
    throw ConfigError("metrics: avg_sum_scores outside [-1,1.5]");
  if (ci_lo.has_value() != ci_hi.has_value())
    throw ConfigError("metrics: CI bounds must come in pairs");
  if (ci_lo && *ci_lo > *ci_hi)
    throw ConfigError("metrics: CI bounds out of order");
}

void MetricsWriter::open(const std::string& path,
                         const std::string& config_echo, std::uint64_t seed) {
  bool fresh = !std::filesystem::exists(path) ||
               std::filesystem::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw IoError("cannot open metrics file: " + path);
  if (fresh) {
    json header;
    header["schema"] = kSchema;
    header["seed"] = seed;
    header["config"] = config_echo;
    out_ << header.dump() << "\n";
    out_.flush();
  }
}

void MetricsWriter::write(const MetricsRecord& rec) {
  if (!out_.is_open()) throw UsageError("metrics writer not open");
  rec.validate();
  out_ << rec.to_json().dump() << "\n";
  out_.flush();
}

std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("metrics file is empty");
  json header = json::parse(line);
  if (!header.contains("schema") || header["schema"] != kSchema)
    throw ConfigError("metrics file missing schema header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRecord r = MetricsRecord::from_json(json::parse(line));
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace courier::harness
