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

#include "courier/harness/stats.hpp"

#include <algorithm>
#include <cmath>

namespace courier::harness {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw UsageError("mean of empty vector");
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw UsageError("percentile of empty vector");
  if (p < 0.0 || p > 1.0) throw UsageError("percentile level must be in [0,1]");
  std::sort(values.begin(), values.end());
  double rank = p * static_cast<double>(values.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  std::size_t hi = std::min(lo + 1, values.size() - 1);
  double frac = rank - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::pair<double, double> hierarchical_bootstrap_ci(
    const std::vector<std::vector<double>>& scores_by_game, double level,
    int replicates, Rng& rng) {
  std::size_t games = scores_by_game.size();
  if (games < 2)
    throw UsageError("hierarchical bootstrap needs at least 2 games");
  for (const auto& g : scores_by_game)
    if (g.empty()) throw UsageError("game with no trials");
  if (level <= 0.0 || level >= 1.0)
    throw UsageError("confidence level must be in (0,1)");
  if (replicates < 2) throw UsageError("need at least 2 replicates");

  std::vector<double> stats(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    Rng rep = rng.fork("rep", static_cast<std::uint64_t>(r));
    double acc = 0.0;
    for (std::size_t gi = 0; gi < games; ++gi) {
      std::size_t g = static_cast<std::size_t>(
          rep.uniform_int(static_cast<int>(games)));
      const std::vector<double>& trials = scores_by_game[g];
      double game_acc = 0.0;
      for (std::size_t ti = 0; ti < trials.size(); ++ti)
        game_acc += trials[static_cast<std::size_t>(
            rep.uniform_int(static_cast<int>(trials.size())))];
      acc += game_acc / static_cast<double>(trials.size());
    }
    stats[static_cast<std::size_t>(r)] = acc / static_cast<double>(games);
  }
  double tail = (1.0 - level) / 2.0;
  return {percentile(stats, tail), percentile(stats, 1.0 - tail)};
}

double wilcoxon_signed_rank(const std::vector<double>& diffs) {
  std::vector<double> abs_d;
  std::vector<int> sign;
  for (double d : diffs) {
    if (d == 0.0) continue;
    abs_d.push_back(std::abs(d));
    sign.push_back(d > 0 ? 1 : -1);
  }
  std::size_t n = abs_d.size();
  if (n == 0) return 1.0;

  // Average ranks over ties.
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&abs_d](std::size_t a, std::size_t b) { return abs_d[a] < abs_d[b]; });
  std::vector<double> rank(n);
  double tie_correction = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_d[idx[j + 1]] == abs_d[idx[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
    double t = static_cast<double>(j - i + 1);
    tie_correction += t * t * t - t;
    i = j + 1;
  }

  double w_plus = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (sign[k] > 0) w_plus += rank[k];

  double nd = static_cast<double>(n);
  double mean = nd * (nd + 1.0) / 4.0;
  double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 -
               tie_correction / 48.0;
  if (var <= 0.0) return 1.0;
  double num = w_plus - mean;
  // Continuity correction toward the mean.
  if (num > 0.5)
    num -= 0.5;
  else if (num < -0.5)
    num += 0.5;
  else
    num = 0.0;
  double z = num / std::sqrt(var);
  double p = std::erfc(std::abs(z) / std::sqrt(2.0));
  return std::min(1.0, p);
}

}  // namespace courier::harness
