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

#include <utility>
#include <vector>

#include "courier/common.hpp"

namespace courier::harness {

// Percentile with linear interpolation between order statistics; p in [0,1].
double percentile(std::vector<double> values, double p);

// Two-level percentile bootstrap for nested scores (outer: games, inner:
// trials within a game). Resamples games with replacement, then trials
// within each chosen game; the statistic is the mean of per-game means.
// Returns the (lo, hi) percentile interval of the requested level.
std::pair<double, double> hierarchical_bootstrap_ci(
    const std::vector<std::vector<double>>& scores_by_game,
    double level, int replicates, Rng& rng);

// Two-sided Wilcoxon signed-rank test on paired differences (normal
// approximation with tie correction and continuity correction). Zero
// differences are dropped; all-zero input returns p = 1.
double wilcoxon_signed_rank(const std::vector<double>& diffs);

double mean_of(const std::vector<double>& v);

}  // namespace courier::harness
