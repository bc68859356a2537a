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

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "courier/nn/tape.hpp"
#include "doctest.h"

namespace courier::testutil {

using nn::Mat;
using nn::Tape;
using nn::Var;

// Builds a scalar loss from the given input nodes on the given tape.
using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct FdReport {
  double max_rel_err = 0.0;
  std::string where;
};

inline double fd_rel_err(double analytic, double numeric) {
  double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

// Central-difference check of d(loss)/d(input) for every entry of every
// input, against reverse-mode gradients. Inputs enter the graph as parameter
// leaves; the perturbed re-evaluations use constants on grad-free tapes.
inline FdReport check_grads(std::vector<Mat> inputs, const GraphFn& graph,
                            double eps = 1e-5) {
  std::vector<nn::Param> params(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    params[i].name = "fd_in_" + std::to_string(i);
    params[i].value = inputs[i];
    params[i].grad = Mat::Zero(inputs[i].rows(), inputs[i].cols());
  }

  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (auto& p : params) vars.push_back(tape.param(p));
  Var loss = graph(tape, vars);
  REQUIRE(loss.rows() == 1);
  REQUIRE(loss.cols() == 1);
  tape.backward(loss);

  auto eval = [&](const std::vector<Mat>& xs) {
    Tape t(false);
    std::vector<Var> vs;
    vs.reserve(xs.size());
    for (const auto& x : xs) vs.push_back(t.constant(x));
    return graph(t, vs).val()(0, 0);
  };

  FdReport rep;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (int r = 0; r < inputs[i].rows(); ++r) {
      for (int c = 0; c < inputs[i].cols(); ++c) {
        std::vector<Mat> xs = inputs;
        double save = xs[i](r, c);
        xs[i](r, c) = save + eps;
        double up = eval(xs);
        xs[i](r, c) = save - eps;
        double dn = eval(xs);
        double numeric = (up - dn) / (2 * eps);
        double analytic = params[i].grad(r, c);
        double err = fd_rel_err(analytic, numeric);
        if (err > rep.max_rel_err) {
          rep.max_rel_err = err;
          rep.where = "input " + std::to_string(i) + " (" +
                      std::to_string(r) + "," + std::to_string(c) + ")";
        }
      }
    }
  }
  return rep;
}

inline Mat random_mat(int r, int c, Rng& rng, double lo = -1.0,
                      double hi = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

}  // namespace courier::testutil
