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

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "courier/common.hpp"

namespace courier::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// A trainable tensor with Adam moment buffers. Owned by a ParamStore; graphs
// reference it through Tape::param leaves.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;

  void zero_grad() { grad.setZero(); }
};

class Tape;

// Handle to a node on a tape. Values are dense double matrices; a column
// vector is an n-by-1 matrix.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;

  const Mat& val() const;
  int rows() const { return static_cast<int>(val().rows()); }
  int cols() const { return static_cast<int>(val().cols()); }
};

// Reverse-mode tape. Nodes are appended in execution order; backward() walks
// them in reverse and accumulates into Param::grad for parameter leaves.
class Tape {
 public:
  struct Node {
    Mat val;
    Mat grad;                      // lazily sized; empty means all-zero
    std::function<void(Tape&, Node&)> back;  // null for leaves
    Param* param = nullptr;        // set for parameter leaves
    bool needs_grad = false;
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Mat v);
  Var param(Param& p);

  // Runs reverse accumulation from a scalar (1x1) root.
  void backward(Var root);

  Node& node(int i) { return nodes_[i]; }
  const Node& node(int i) const { return nodes_[i]; }
  std::size_t size() const { return nodes_.size(); }

  // Adds g into the gradient buffer of node i, allocating on first touch.
  void accum(int i, const Mat& g);
  // Gradient of a node after backward(); zero matrix if it was never touched.
  Mat grad_of(Var v) const;

  Var make(Mat val, bool needs_grad, std::function<void(Tape&, Node&)> back);

 private:
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

inline const Mat& Var::val() const { return tape->node(idx).val; }

// ---- Operations -----------------------------------------------------------
// All binary shape mismatches throw ConfigError. Gradient formulas are unit
// tested against central finite differences.

Var matmul(Var a, Var b);          // (r x k) * (k x c)
Var matmul_nt(Var a, Var b);       // a * b^T
Var add(Var a, Var b);             // same shape
Var add_rowvec(Var a, Var b);      // b is 1 x c, broadcast over rows of a
Var sub(Var a, Var b);
Var neg(Var a);
Var cmul(Var a, Var b);            // elementwise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var cmul_const(Var a, const Mat& m);
Var add_const(Var a, const Mat& m);

Var concat_cols(const std::vector<Var>& xs);
Var concat_rows(const std::vector<Var>& xs);
Var slice_cols(Var a, int c0, int n);
Var slice_rows(Var a, int r0, int n);

Var tanh_(Var a);
Var sigmoid_(Var a);
Var silu_(Var a);
Var exp_(Var a);
Var log_(Var a);
Var softplus_(Var a);
Var square_(Var a);
Var clamp_min(Var a, double floor);

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

Var sum_all(Var a);                // 1 x 1
Var mean_all(Var a);
Var rowsum(Var a);                 // r x 1: per-row sum over columns
Var colsum(Var a);                 // 1 x c

// Row-major flatten to a single row: out(0, r*cols + c) = a(r, c).
Var flatten_to_row(Var a);

Var gather_rows(Var a, std::vector<int> idx);
// Adds row i of `a` into row idx[i] of an out_rows x cols zero matrix.
// Duplicate indices accumulate.
Var scatter_add_rows(Var a, std::vector<int> idx, int out_rows);

// 3x3 same-padding convolution over a grid stored row-major as (h*w) x c_in.
// kernel is (9*c_in) x c_out with patch layout (dy, dx, c_in); bias 1 x c_out.
Var conv2d_3x3(Var input, int h, int w, Var kernel, Var bias);

// Rearranges grouped-categorical layout (batch*groups) x classes into
// batch x (groups*classes) and back.
Var regroup_rows(Var a, int batch);
Var split_groups(Var a, int groups);

Var stop_grad(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

// ---- Parameter store and optimizer ----------------------------------------

class ParamStore {
 public:
  enum class Init { zeros, glorot_uniform, identity };

  Param& add(const std::string& name, int rows, int cols, Init init, Rng& rng);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Param*> all();
  std::vector<Param*> with_prefix(const std::string& prefix);
  void zero_grads();
  std::size_t count() const { return order_.size(); }

 private:
  // Deques would also work; deque-of-unique_ptr keeps Param* stable.
  std::vector<std::unique_ptr<Param>> owned_;
  std::vector<Param*> order_;
};

// Adam with global-norm gradient clipping over the parameter group it owns.
class Adam {
 public:
  Adam(std::vector<Param*> params, double lr, double clip_norm,
       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Applies one update from the accumulated grads, then zeroes them.
  // Returns the pre-clip global gradient norm.
  double step();

  std::int64_t t() const { return t_; }
  void set_t(std::int64_t t) { t_ = t; }
  double lr() const { return lr_; }
  const std::vector<Param*>& params() const { return params_; }

 private:
  std::vector<Param*> params_;
  double lr_, clip_norm_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

// A stack of dense layers sharing one hidden width. The final layer is linear
// unless activate_last is set at call time.
struct Mlp {
  std::vector<Param*> weights;
  std::vector<Param*> biases;

  static Mlp create(ParamStore& store, const std::string& prefix, int in_dim,
                    int hidden, int layers, int out_dim, Rng& rng,
                    bool zero_last = false);
  Var apply(Tape& t, Var x, bool activate_last = false) const;
};

}  // namespace courier::nn
