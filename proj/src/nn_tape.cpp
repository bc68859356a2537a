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

#include "courier/nn/tape.hpp"

#include <cmath>
#include <memory>

namespace courier::nn {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError("tape: " + msg);
}

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Var Tape::make(Mat val, bool needs_grad,
               std::function<void(Tape&, Node&)> back) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad && grad_enabled_;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat v) { return make(std::move(v), false, nullptr); }

Var Tape::param(Param& p) {
  Var v = make(p.value, true, nullptr);
  nodes_.back().param = &p;
  return v;
}

void Tape::accum(int i, const Mat& g) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  n.grad += g;
}

Mat Tape::grad_of(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.idx)];
  if (n.grad.size() == 0) return Mat::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  check(root.tape == this, "backward root from another tape");
  check(root.val().rows() == 1 && root.val().cols() == 1,
        "backward root must be scalar");
  accum(root.idx, Mat::Ones(1, 1));
  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0)
        n.param->grad = Mat::Zero(n.val.rows(), n.val.cols());
      n.param->grad += n.grad;
    }
    if (n.back) n.back(*this, n);
  }
}

// ---- helpers for op definitions --------------------------------------------

namespace {

bool ng(Var a) { return a.tape->node(a.idx).needs_grad; }

}  // namespace

Var matmul(Var a, Var b) {
  check(a.tape == b.tape, "matmul across tapes");
  check(a.cols() == b.rows(),
        "matmul shapes " + shape_str(a.val()) + " * " + shape_str(b.val()));
  Mat out = a.val() * b.val();
  int ai = a.idx, bi = b.idx;
  return a.tape->make(std::move(out), ng(a) || ng(b),
                      [ai, bi](Tape& t, Tape::Node& n) {
                        t.accum(ai, n.grad * t.node(bi).val.transpose());
                        t.accum(bi, t.node(ai).val.transpose() * n.grad);
                      });
}

Var matmul_nt(Var a, Var b) {
  check(a.tape == b.tape, "matmul_nt across tapes");
  check(a.cols() == b.cols(),
        "matmul_nt shapes " + shape_str(a.val()) + " , " + shape_str(b.val()));
  Mat out = a.val() * b.val().transpose();
  int ai = a.idx, bi = b.idx;
  return a.tape->make(std::move(out), ng(a) || ng(b),
                      [ai, bi](Tape& t, Tape::Node& n) {
                        t.accum(ai, n.grad * t.node(bi).val);
                        t.accum(bi, n.grad.transpose() * t.node(ai).val);
                      });
}

Var add(Var a, Var b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(),
        "add shapes " + shape_str(a.val()) + " + " + shape_str(b.val()));
  Mat out = a.val() + b.val();
  int ai = a.idx, bi = b.idx;
  return a.tape->make(std::move(out), ng(a) || ng(b),
                      [ai, bi](Tape& t, Tape::Node& n) {
                        t.accum(ai, n.grad);
                        t.accum(bi, n.grad);
                      });
}

Var add_rowvec(Var a, Var b) {
  check(b.rows() == 1 && b.cols() == a.cols(),
        "add_rowvec shapes " + shape_str(a.val()) + " + " +
            shape_str(b.val()));
  Mat out = a.val().rowwise() + b.val().row(0);
  int ai = a.idx, bi = b.idx;
  return a.tape->make(std::move(out), ng(a) || ng(b),
                      [ai, bi](Tape& t, Tape::Node& n) {
                        t.accum(ai, n.grad);
                        t.accum(bi, n.grad.colwise().sum());
                      });
}

Var sub(Var a, Var b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(),
        "sub shapes " + shape_str(a.val()) + " - " + shape_str(b.val()));
  Mat out = a.val() - b.val();
  int ai = a.idx, bi = b.idx;
  return a.tape->make(std::move(out), ng(a) || ng(b),
                      [ai, bi](Tape& t, Tape::Node& n) {
                        t.accum(ai, n.grad);
                        t.accum(bi, -n.grad);
                      });
}

Var neg(Var a) { return scale(a, -1.0); }

Var cmul(Var a, Var b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(),
        "cmul shapes " + shape_str(a.val()) + " * " + shape_str(b.val()));
  Mat out = a.val().cwiseProduct(b.val());
  int ai = a.idx, bi = b.idx;
  return a.tape->make(
      std::move(out), ng(a) || ng(b), [ai, bi](Tape& t, Tape::Node& n) {
        t.accum(ai, n.grad.cwiseProduct(t.node(bi).val));
        t.accum(bi, n.grad.cwiseProduct(t.node(ai).val));
      });
}

Var scale(Var a, double s) {
  Mat out = a.val() * s;
  int ai = a.idx;
  return a.tape->make(std::move(out), ng(a), [ai, s](Tape& t, Tape::Node& n) {
    t.accum(ai, n.grad * s);
  });
}

Var add_scalar(Var a, double s) {
  Mat out = a.val().array() + s;
  int ai = a.idx;
  return a.tape->make(std::move(out), ng(a), [ai](Tape& t, Tape::Node& n) {
    t.accum(ai, n.grad);
  });
}

Var cmul_const(Var a, const Mat& m) {
  check(a.rows() == m.rows() && a.cols() == m.cols(), "cmul_const shape");
  Mat out = a.val().cwiseProduct(m);
  int ai = a.idx;
  Mat mc = m;
  return a.tape->make(std::move(out), ng(a),
                      [ai, mc](Tape& t, Tape::Node& n) {
                        t.accum(ai, n.grad.cwiseProduct(mc));
                      });
}

Var add_const(Var a, const Mat& m) {
  check(a.rows() == m.rows() && a.cols() == m.cols(), "add_const shape");
  Mat out = a.val() + m;
  int ai = a.idx;
  return a.tape->make(std::move(out), ng(a), [ai](Tape& t, Tape::Node& n) {
    t.accum(ai, n.grad);
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  check(!xs.empty(), "concat_cols of nothing");
  int rows = xs[0].rows(), cols = 0;
  bool any = false;
  for (const Var& x : xs) {
    check(x.rows() == rows, "concat_cols row mismatch");
    cols += x.cols();
    any = any || ng(x);
  }
  Mat out(rows, cols);
  std::vector<int> idxs;
  std::vector<int> widths;
  int c = 0;
  for (const Var& x : xs) {
    out.middleCols(c, x.cols()) = x.val();
    idxs.push_back(x.idx);
    widths.push_back(x.cols());
    c += x.cols();
  }
  Tape* tp = xs[0].tape;
  return tp->make(std::move(out), any,
                  [idxs, widths](Tape& t, Tape::Node& n) {
                    int c0 = 0;
                    for (std::size_t k = 0; k < idxs.size(); ++k) {
                      t.accum(idxs[k], n.grad.middleCols(c0, widths[k]));
                      c0 += widths[k];
                    }
                  });
}

Var concat_rows(const std::vector<Var>& xs) {
  check(!xs.empty(), "concat_rows of nothing");
  int cols = xs[0].cols(), rows = 0;
  bool any = false;
  for (const Var& x : xs) {
    check(x.cols() == cols, "concat_rows col mismatch");
    rows += x.rows();
    any = any || ng(x);
  }
  Mat out(rows, cols);
  std::vector<int> idxs, heights;
  int r = 0;
  for (const Var& x : xs) {
    out.middleRows(r, x.rows()) = x.val();
    idxs.push_back(x.idx);
    heights.push_back(x.rows());
    r += x.rows();
  }
  Tape* tp = xs[0].tape;
  return tp->make(std::move(out), any,
                  [idxs, heights](Tape& t, Tape::Node& n) {
                    int r0 = 0;
                    for (std::size_t k = 0; k < idxs.size(); ++k) {
                      t.accum(idxs[k], n.grad.middleRows(r0, heights[k]));
                      r0 += heights[k];
                    }
                  });
}

Var slice_cols(Var a, int c0, int ncols) {
  check(c0 >= 0 && ncols >= 0 && c0 + ncols <= a.cols(), "slice_cols range");
  Mat out = a.val().middleCols(c0, ncols);
  int ai = a.idx, rows = a.rows(), cols = a.cols();
  return a.tape->make(std::move(out), ng(a),
                      [ai, c0, ncols, rows, cols](Tape& t, Tape::Node& n) {
                        Mat g = Mat::Zero(rows, cols);
                        g.middleCols(c0, ncols) = n.grad;
                        t.accum(ai, g);
                      });
}

Var slice_rows(Var a, int r0, int nrows) {
  check(r0 >= 0 && nrows >= 0 && r0 + nrows <= a.rows(), "slice_rows range");
  Mat out = a.val().middleRows(r0, nrows);
  int ai = a.idx, rows = a.rows(), cols = a.cols();
  return a.tape->make(std::move(out), ng(a),
                      [ai, r0, nrows, rows, cols](Tape& t, Tape::Node& n) {
                        Mat g = Mat::Zero(rows, cols);
                        g.middleRows(r0, nrows) = n.grad;
                        t.accum(ai, g);
                      });
}

// ---- pointwise nonlinearities ----------------------------------------------

Var tanh_(Var a) {
  Mat out = a.val().array().tanh();
  int ai = a.idx, oi;
  Var v = a.tape->make(std::move(out), ng(a), nullptr);
  oi = v.idx;
  if (ng(a))
    a.tape->node(oi).back = [ai, oi](Tape& t, Tape::Node& n) {
      const Mat& y = t.node(oi).val;
      t.accum(ai, (n.grad.array() * (1.0 - y.array().square())).matrix());
    };
  return v;
}

Var sigmoid_(Var a) {
  Mat out = (1.0 / (1.0 + (-a.val().array()).exp())).matrix();
  Var v = a.tape->make(std::move(out), ng(a), nullptr);
  int ai = a.idx, oi = v.idx;
  if (ng(a))
    a.tape->node(oi).back = [ai, oi](Tape& t, Tape::Node& n) {
      const Mat& y = t.node(oi).val;
      t.accum(ai, (n.grad.array() * y.array() * (1.0 - y.array())).matrix());
    };
  return v;
}

Var silu_(Var a) {
  Eigen::ArrayXXd x = a.val().array();
  Eigen::ArrayXXd sig = 1.0 / (1.0 + (-x).exp());
  Mat out = (x * sig).matrix();
  Var v = a.tape->make(std::move(out), ng(a), nullptr);
  int ai = a.idx;
  if (ng(a)) {
    Mat dv = (sig * (1.0 + x * (1.0 - sig))).matrix();
    a.tape->node(v.idx).back = [ai, dv](Tape& t, Tape::Node& n) {
      t.accum(ai, n.grad.cwiseProduct(dv));
    };
  }
  return v;
}

Var exp_(Var a) {
  Mat out = a.val().array().exp();
  Var v = a.tape->make(std::move(out), ng(a), nullptr);
  int ai = a.idx, oi = v.idx;
  if (ng(a))
    a.tape->node(oi).back = [ai, oi](Tape& t, Tape::Node& n) {
      t.accum(ai, n.grad.cwiseProduct(t.node(oi).val));
    };
  return v;
}

Var log_(Var a) {
  Mat out = a.val().array().log();
  Var v = a.tape->make(std::move(out), ng(a), nullptr);
  int ai = a.idx;
  if (ng(a))
    a.tape->node(v.idx).back = [ai](Tape& t, Tape::Node& n) {
      t.accum(ai, n.grad.cwiseQuotient(t.node(ai).val));
    };
  return v;
}

Var softplus_(Var a) {
  // log(1+exp(x)) computed as max(x,0) + log1p(exp(-|x|)) for stability.
  Eigen::ArrayXXd x = a.val().array();
  Mat out =
      (x.max(0.0) + (1.0 + (-x.abs()).exp()).log()).matrix();
  Var v = a.tape->make(std::move(out), ng(a), nullptr);
  int ai = a.idx;
  if (ng(a)) {
    Mat dv = (1.0 / (1.0 + (-x).exp())).matrix();
    a.tape->node(v.idx).back = [ai, dv](Tape& t, Tape::Node& n) {
      t.accum(ai, n.grad.cwiseProduct(dv));
    };
  }
  return v;
}

Var square_(Var a) {
  Mat out = a.val().array().square();
  Var v = a.tape->make(std::move(out), ng(a), nullptr);
  int ai = a.idx;
  if (ng(a))
    a.tape->node(v.idx).back = [ai](Tape& t, Tape::Node& n) {
      t.accum(ai, (n.grad.array() * 2.0 * t.node(ai).val.array()).matrix());
    };
  return v;
}

Var clamp_min(Var a, double floor) {
  Mat out = a.val().cwiseMax(floor);
  Var v = a.tape->make(std::move(out), ng(a), nullptr);
  int ai = a.idx;
  if (ng(a)) {
    Mat mask =
        (a.val().array() > floor).cast<double>().matrix();
    a.tape->node(v.idx).back = [ai, mask](Tape& t, Tape::Node& n) {
      t.accum(ai, n.grad.cwiseProduct(mask));
    };
  }
  return v;
}

// ---- softmax family ---------------------------------------------------------

Var softmax_rows(Var a) {
  Mat out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r) {
    Eigen::ArrayXd row = a.val().row(r).array();
    Eigen::ArrayXd e = (row - row.maxCoeff()).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  Var v = a.tape->make(std::move(out), ng(a), nullptr);
  int ai = a.idx, oi = v.idx;
  if (ng(a))
    a.tape->node(oi).back = [ai, oi](Tape& t, Tape::Node& n) {
      const Mat& y = t.node(oi).val;
      Mat g(y.rows(), y.cols());
      for (int r = 0; r < y.rows(); ++r) {
        double dot = n.grad.row(r).dot(y.row(r));
        g.row(r) =
            ((n.grad.row(r).array() - dot) * y.row(r).array()).matrix();
      }
      t.accum(ai, g);
    };
  return v;
}

Var log_softmax_rows(Var a) {
  Mat out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r) {
    Eigen::ArrayXd row = a.val().row(r).array();
    double m = row.maxCoeff();
    double lse = m + std::log((row - m).exp().sum());
    out.row(r) = (row - lse).matrix();
  }
  Var v = a.tape->make(std::move(out), ng(a), nullptr);
  int ai = a.idx, oi = v.idx;
  if (ng(a))
    a.tape->node(oi).back = [ai, oi](Tape& t, Tape::Node& n) {
      const Mat& ls = t.node(oi).val;
      Mat g(ls.rows(), ls.cols());
      for (int r = 0; r < ls.rows(); ++r) {
        double s = n.grad.row(r).sum();
        g.row(r) =
            (n.grad.row(r).array() - s * ls.row(r).array().exp()).matrix();
      }
      t.accum(ai, g);
    };
  return v;
}

// ---- reductions -------------------------------------------------------------

Var sum_all(Var a) {
  Mat out(1, 1);
  out(0, 0) = a.val().sum();
  int ai = a.idx, rows = a.rows(), cols = a.cols();
  return a.tape->make(std::move(out), ng(a),
                      [ai, rows, cols](Tape& t, Tape::Node& n) {
                        t.accum(ai, Mat::Constant(rows, cols, n.grad(0, 0)));
                      });
}

Var mean_all(Var a) {
  double inv = 1.0 / (static_cast<double>(a.rows()) * a.cols());
  return scale(sum_all(a), inv);
}

Var rowsum(Var a) {
  Mat out = a.val().rowwise().sum();
  int ai = a.idx, cols = a.cols();
  return a.tape->make(std::move(out), ng(a),
                      [ai, cols](Tape& t, Tape::Node& n) {
                        t.accum(ai, n.grad * Mat::Ones(1, cols));
                      });
}

Var colsum(Var a) {
  Mat out = a.val().colwise().sum();
  int ai = a.idx, rows = a.rows();
  return a.tape->make(std::move(out), ng(a),
                      [ai, rows](Tape& t, Tape::Node& n) {
                        t.accum(ai, Mat::Ones(rows, 1) * n.grad);
                      });
}

Var flatten_to_row(Var a) {
  int rows = a.rows(), cols = a.cols();
  Mat out(1, rows * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(0, r * cols + c) = a.val()(r, c);
  int ai = a.idx;
  return a.tape->make(std::move(out), ng(a),
                      [ai, rows, cols](Tape& t, Tape::Node& n) {
                        Mat g(rows, cols);
                        for (int r = 0; r < rows; ++r)
                          for (int c = 0; c < cols; ++c)
                            g(r, c) = n.grad(0, r * cols + c);
                        t.accum(ai, g);
                      });
}

// ---- row indexing ------------------------------------------------------------

Var gather_rows(Var a, std::vector<int> idx) {
  Mat out(static_cast<int>(idx.size()), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    check(idx[k] >= 0 && idx[k] < a.rows(), "gather_rows index");
    out.row(static_cast<int>(k)) = a.val().row(idx[k]);
  }
  int ai = a.idx, rows = a.rows(), cols = a.cols();
  return a.tape->make(std::move(out), ng(a),
                      [ai, idx, rows, cols](Tape& t, Tape::Node& n) {
                        Mat g = Mat::Zero(rows, cols);
                        for (std::size_t k = 0; k < idx.size(); ++k)
                          g.row(idx[k]) += n.grad.row(static_cast<int>(k));
                        t.accum(ai, g);
                      });
}

Var scatter_add_rows(Var a, std::vector<int> idx, int out_rows) {
  check(static_cast<int>(idx.size()) == a.rows(), "scatter_add_rows count");
  Mat out = Mat::Zero(out_rows, a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    check(idx[k] >= 0 && idx[k] < out_rows, "scatter_add_rows index");
    out.row(idx[k]) += a.val().row(static_cast<int>(k));
  }
  int ai = a.idx;
  return a.tape->make(std::move(out), ng(a),
                      [ai, idx](Tape& t, Tape::Node& n) {
                        Mat g(static_cast<int>(idx.size()), n.grad.cols());
                        for (std::size_t k = 0; k < idx.size(); ++k)
                          g.row(static_cast<int>(k)) = n.grad.row(idx[k]);
                        t.accum(ai, g);
                      });
}

// ---- convolution --------------------------------------------------------------

Var conv2d_3x3(Var input, int h, int w, Var kernel, Var bias) {
  int c_in = input.cols();
  check(input.rows() == h * w, "conv2d input rows != h*w");
  check(kernel.rows() == 9 * c_in, "conv2d kernel rows != 9*c_in");
  int c_out = kernel.cols();
  check(bias.rows() == 1 && bias.cols() == c_out, "conv2d bias shape");

  // im2col: patches(p, (dy*3+dx)*c_in + ci) with zero padding at the border.
  Mat patches = Mat::Zero(h * w, 9 * c_in);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int dy = 0; dy < 3; ++dy)
        for (int dx = 0; dx < 3; ++dx) {
          int yy = y + dy - 1, xx = x + dx - 1;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          patches.block(y * w + x, (dy * 3 + dx) * c_in, 1, c_in) =
              input.val().block(yy * w + xx, 0, 1, c_in);
        }

  Mat out = (patches * kernel.val()).rowwise() + bias.val().row(0);
  int ii = input.idx, ki = kernel.idx, bi = bias.idx;
  bool any = ng(input) || ng(kernel) || ng(bias);
  return input.tape->make(
      std::move(out), any,
      [ii, ki, bi, patches, h, w, c_in](Tape& t, Tape::Node& n) {
        t.accum(ki, patches.transpose() * n.grad);
        t.accum(bi, n.grad.colwise().sum());
        if (t.node(ii).needs_grad) {
          Mat dpatch = n.grad * t.node(ki).val.transpose();
          Mat din = Mat::Zero(h * w, c_in);
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
              for (int dy = 0; dy < 3; ++dy)
                for (int dx = 0; dx < 3; ++dx) {
                  int yy = y + dy - 1, xx = x + dx - 1;
                  if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                  din.block(yy * w + xx, 0, 1, c_in) +=
                      dpatch.block(y * w + x, (dy * 3 + dx) * c_in, 1, c_in);
                }
          t.accum(ii, din);
        }
      });
}

// ---- grouped-categorical reshapes ----------------------------------------------

Var regroup_rows(Var a, int batch) {
  check(a.rows() % batch == 0, "regroup_rows batch");
  int groups = a.rows() / batch;
  int classes = a.cols();
  Mat out(batch, groups * classes);
  for (int b = 0; b < batch; ++b)
    for (int g = 0; g < groups; ++g)
      out.block(b, g * classes, 1, classes) = a.val().row(b * groups + g);
  int ai = a.idx;
  return a.tape->make(std::move(out), ng(a),
                      [ai, batch, groups, classes](Tape& t, Tape::Node& n) {
                        Mat g(batch * groups, classes);
                        for (int b = 0; b < batch; ++b)
                          for (int gi = 0; gi < groups; ++gi)
                            g.row(b * groups + gi) =
                                n.grad.block(b, gi * classes, 1, classes);
                        t.accum(ai, g);
                      });
}

Var split_groups(Var a, int groups) {
  check(a.cols() % groups == 0, "split_groups cols");
  int classes = a.cols() / groups;
  int batch = a.rows();
  Mat out(batch * groups, classes);
  for (int b = 0; b < batch; ++b)
    for (int g = 0; g < groups; ++g)
      out.row(b * groups + g) = a.val().block(b, g * classes, 1, classes);
  int ai = a.idx;
  return a.tape->make(std::move(out), ng(a),
                      [ai, batch, groups, classes](Tape& t, Tape::Node& n) {
                        Mat g(batch, groups * classes);
                        for (int b = 0; b < batch; ++b)
                          for (int gi = 0; gi < groups; ++gi)
                            g.block(b, gi * classes, 1, classes) =
                                n.grad.row(b * groups + gi);
                        t.accum(ai, g);
                      });
}

Var stop_grad(Var a) {
  return a.tape->make(a.val(), false, nullptr);
}

// ---- ParamStore ------------------------------------------------------------------

Param& ParamStore::add(const std::string& name, int rows, int cols, Init init,
                       Rng& rng) {
  if (contains(name)) throw ConfigError("duplicate parameter: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  switch (init) {
    case Init::zeros:
      p->value = Mat::Zero(rows, cols);
      break;
    case Init::identity:
      p->value = Mat::Identity(rows, cols);
      break;
    case Init::glorot_uniform: {
      double limit = std::sqrt(6.0 / (rows + cols));
      p->value.resize(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          p->value(r, c) = rng.uniform(-limit, limit);
      break;
    }
  }
  p->grad = Mat::Zero(rows, cols);
  p->adam_m = Mat::Zero(rows, cols);
  p->adam_v = Mat::Zero(rows, cols);
  Param* raw = p.get();
  owned_.push_back(std::move(p));
  order_.push_back(raw);
  return *raw;
}

Param& ParamStore::get(const std::string& name) {
  for (Param* p : order_)
    if (p->name == name) return *p;
  throw ConfigError("unknown parameter: " + name);
}

const Param& ParamStore::get(const std::string& name) const {
  for (const Param* p : order_)
    if (p->name == name) return *p;
  throw ConfigError("unknown parameter: " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const Param* p : order_)
    if (p->name == name) return true;
  return false;
}

std::vector<Param*> ParamStore::all() { return order_; }

std::vector<Param*> ParamStore::with_prefix(const std::string& prefix) {
  std::vector<Param*> out;
  for (Param* p : order_)
    if (p->name.rfind(prefix, 0) == 0) out.push_back(p);
  return out;
}

void ParamStore::zero_grads() {
  for (Param* p : order_) p->grad.setZero();
}

// ---- Adam -------------------------------------------------------------------------

Adam::Adam(std::vector<Param*> params, double lr, double clip_norm,
           double beta1, double beta2, double eps)
    : params_(std::move(params)),
      lr_(lr),
      clip_norm_(clip_norm),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

double Adam::step() {
  double sq = 0.0;
  for (Param* p : params_) sq += p->grad.squaredNorm();
  double norm = std::sqrt(sq);
  double scale = 1.0;
  if (clip_norm_ > 0.0 && norm > clip_norm_) scale = clip_norm_ / norm;
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : params_) {
    Mat g = p->grad * scale;
    p->adam_m = beta1_ * p->adam_m + (1.0 - beta1_) * g;
    p->adam_v =
        (beta2_ * p->adam_v.array() + (1.0 - beta2_) * g.array().square())
            .matrix();
    Eigen::ArrayXXd mhat = p->adam_m.array() / bc1;
    Eigen::ArrayXXd vhat = p->adam_v.array() / bc2;
    p->value -= (lr_ * mhat / (vhat.sqrt() + eps_)).matrix();
    p->grad.setZero();
  }
  return norm;
}

// ---- Mlp ---------------------------------------------------------------------------

Mlp Mlp::create(ParamStore& store, const std::string& prefix, int in_dim,
                int hidden, int layers, int out_dim, Rng& rng,
                bool zero_last) {
  if (layers < 1) throw ConfigError("Mlp needs at least one layer");
  Mlp m;
  int d = in_dim;
  for (int i = 0; i < layers; ++i) {
    bool last = (i == layers - 1);
    int od = last ? out_dim : hidden;
    auto init = (last && zero_last) ? ParamStore::Init::zeros
                                    : ParamStore::Init::glorot_uniform;
    m.weights.push_back(
        &store.add(prefix + ".w" + std::to_string(i), d, od, init, rng));
    m.biases.push_back(&store.add(prefix + ".b" + std::to_string(i), 1, od,
                                  ParamStore::Init::zeros, rng));
    d = od;
  }
  return m;
}

Var Mlp::apply(Tape& t, Var x, bool activate_last) const {
  Var h = x;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    h = add_rowvec(matmul(h, t.param(*weights[i])), t.param(*biases[i]));
    if (i + 1 < weights.size() || activate_last) h = silu_(h);
  }
  return h;
}

}  // namespace courier::nn
