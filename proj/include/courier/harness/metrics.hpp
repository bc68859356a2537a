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

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace courier::harness {

// One line of the metrics stream. Exactly one of win_rate / avg_sum_scores
// is set on evaluation records; loss fields are set on training records.
struct MetricsRecord {
  std::int64_t step = 0;
  std::string kind;   // "train" | "eval" | "finetune"
  std::string split;
  std::uint64_t seed = 0;
  std::optional<double> win_rate;
  std::optional<double> avg_sum_scores;
  std::optional<double> ci_lo, ci_hi;
  std::optional<double> loss_total, loss_pred, loss_dyn, loss_rep;
  std::optional<double> actor_loss, critic_loss, policy_entropy;
  std::optional<double> wm_grad_norm;

  nlohmann::json to_json() const;
  static MetricsRecord from_json(const nlohmann::json& j);
  void validate() const;  // range checks; throws ConfigError
};

// Append-only JSON-lines metrics stream. A fresh file starts with a schema
// header carrying the config echo; appends never rewrite earlier lines.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  void open(const std::string& path, const std::string& config_echo,
            std::uint64_t seed);
  bool is_open() const { return out_.is_open(); }
  void write(const MetricsRecord& rec);

 private:
  std::ofstream out_;
};

// Parses and validates a metrics file; returns the data records (header
// excluded). Throws on schema violations.
std::vector<MetricsRecord> read_metrics(const std::string& path);

}  // namespace courier::harness
