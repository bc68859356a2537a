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

#include <string>

#include "courier/nn/tape.hpp"

namespace courier::harness {

// Loop position and optimizer clocks; everything else that resumption needs
// is derivable from these plus the parameter tensors and the replay spill.
struct TrainCounters {
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  std::int64_t wm_updates = 0;
  std::int64_t policy_updates = 0;
  double ret_range = 0.0;
  std::int64_t wm_opt_t = 0;
  std::int64_t actor_opt_t = 0;
  std::int64_t critic_opt_t = 0;
  std::int64_t evals_done = 0;  // cadence markers (env_steps / interval)
  std::int64_t ckpts_done = 0;
};

// Writes the binary bundle (config echo, counters, every parameter tensor
// with its Adam moments) plus a JSON manifest at path + ".json" listing
// tensor names, shapes, and content checksums. Saving the same state twice
// yields byte-identical files.
void save_checkpoint(const std::string& path, nn::ParamStore& store,
                     const TrainCounters& counters,
                     const std::string& config_echo);

// Restores tensors into an already-built store (same names and shapes, e.g.
// constructed from the echoed config). Returns the config echo.
std::string load_checkpoint(const std::string& path, nn::ParamStore& store,
                            TrainCounters* counters);

// Reads only the config echo, for rebuilding models before a full load.
std::string peek_checkpoint_config(const std::string& path);

}  // namespace courier::harness
