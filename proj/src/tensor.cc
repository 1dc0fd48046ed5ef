// phonest/tensor.cc

// Copyright 2026  The phonest authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "phonest/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace phonest {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kBatchNormVarFloor = 1e-8;

std::string dim_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

// Ensures grad storage exists and is zeroed before any accumulation.
void ensure_grad(TensorNode* n) {
  if (n->grad.size() == 0) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
}

using Nodes = std::vector<std::shared_ptr<TensorNode>>;

// Builds an op node. Outside grad mode, or when no input needs gradients,
// the result is a plain constant and the closure is dropped.
Tensor make_op(Matrix value, Nodes inputs,
               std::function<void(TensorNode&)> backprop) {
  auto node = std::make_shared<TensorNode>();
  node->value = std::move(value);
  bool track = g_grad_enabled;
  if (track) {
    bool any = false;
    for (const auto& in : inputs)
      if (in->requires_grad) any = true;
    track = any;
  }
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(inputs);
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::string shape_str(const Tensor& t) { return dim_str(t.rows(), t.cols()); }

void check_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite())
    throw NumericError("non-finite value detected in " + what);
}

Tensor Tensor::leaf(Matrix value) {
  auto node = std::make_shared<TensorNode>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->is_leaf = true;
  return Tensor(std::move(node));
}

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<TensorNode>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Tensor Tensor::zeros(Eigen::Index rows, Eigen::Index cols) {
  return constant(Matrix::Zero(rows, cols));
}

const Matrix& Tensor::value() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->value;
}

Matrix& Tensor::mutable_value() {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->value;
}

const Matrix& Tensor::grad() const {
  if (!node_) throw ContractError("use of undefined tensor");
  if (node_->grad.size() == 0)
    throw ContractError("tensor has no gradient; run backward() first");
  return node_->grad;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() > 0; }

void Tensor::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return node_ && node_->is_leaf; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1)
    throw ContractError("backward: loss must be a 1x1 scalar, got " +
                        (loss.defined() ? shape_str(loss) : "undefined"));
  check_finite(loss.value(), "loss");
  if (!loss.node()->requires_grad) return;  // nothing trainable upstream

  // Iterative post-order DFS over grad-requiring parents.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior grads reset each call; leaf grads accumulate across calls.
  for (TensorNode* n : order) {
    if (n->is_leaf) {
      ensure_grad(n);
    } else {
      n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
    }
  }
  loss.node()->grad(0, 0) += 1.0;

  // order is post-order, so reverse order visits children before parents.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) n->backprop(*n);
    if (!n->is_leaf && n != loss.node().get()) n->grad.resize(0, 0);
  }

  // Release the graph edges now, inputs before consumers, so the last handle
  // to a long op chain frees nodes one at a time instead of recursing through
  // shared_ptr destructors. backward is therefore single shot per graph.
  for (TensorNode* n : order) {
    n->backprop = nullptr;
    n->parents.clear();
  }
}

// ---- elementwise and linear ops -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a) +
                     " vs " + shape_str(b));
  auto an = a.node(), bn = b.node();
  return make_op(an->value * bn->value, {an, bn}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      ensure_grad(an.get());
      an->grad.noalias() += self.grad * bn->value.transpose();
    }
    if (bn->requires_grad) {
      ensure_grad(bn.get());
      bn->grad.noalias() += an->value.transpose() * self.grad;
    }
  });
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shapes differ, " + shape_str(a) +
                     " vs " + shape_str(b));
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto an = a.node(), bn = b.node();
  return make_op(an->value + bn->value, {an, bn}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      ensure_grad(an.get());
      an->grad += self.grad;
    }
    if (bn->requires_grad) {
      ensure_grad(bn.get());
      bn->grad += self.grad;
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto an = a.node(), bn = b.node();
  return make_op(an->value - bn->value, {an, bn}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      ensure_grad(an.get());
      an->grad += self.grad;
    }
    if (bn->requires_grad) {
      ensure_grad(bn.get());
      bn->grad -= self.grad;
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto an = a.node(), bn = b.node();
  return make_op((an->value.array() * bn->value.array()).matrix(), {an, bn},
                 [an, bn](TensorNode& self) {
                   if (an->requires_grad) {
                     ensure_grad(an.get());
                     an->grad.array() += self.grad.array() * bn->value.array();
                   }
                   if (bn->requires_grad) {
                     ensure_grad(bn.get());
                     bn->grad.array() += self.grad.array() * an->value.array();
                   }
                 });
}

Tensor scale(const Tensor& a, double s) {
  auto an = a.node();
  return make_op(an->value * s, {an}, [an, s](TensorNode& self) {
    if (an->requires_grad) {
      ensure_grad(an.get());
      an->grad += s * self.grad;
    }
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& r) {
  if (r.rows() != 1 || r.cols() != a.cols())
    throw ShapeError("add_rowvec: bias must be 1x" +
                     std::to_string(a.cols()) + ", got " + shape_str(r) +
                     " against " + shape_str(a));
  auto an = a.node(), rn = r.node();
  Matrix v = an->value;
  v.rowwise() += RowVector(rn->value.row(0));
  return make_op(std::move(v), {an, rn}, [an, rn](TensorNode& self) {
    if (an->requires_grad) {
      ensure_grad(an.get());
      an->grad += self.grad;
    }
    if (rn->requires_grad) {
      ensure_grad(rn.get());
      rn->grad += self.grad.colwise().sum();
    }
  });
}

Tensor tanh_of(const Tensor& a) {
  auto an = a.node();
  return make_op(an->value.array().tanh().matrix(), {an},
                 [an](TensorNode& self) {
                   if (!an->requires_grad) return;
                   ensure_grad(an.get());
                   an->grad.array() +=
                       self.grad.array() * (1.0 - self.value.array().square());
                 });
}

Tensor sigmoid(const Tensor& a) {
  auto an = a.node();
  return make_op(an->value.array().logistic().matrix(), {an},
                 [an](TensorNode& self) {
                   if (!an->requires_grad) return;
                   ensure_grad(an.get());
                   an->grad.array() += self.grad.array() * self.value.array() *
                                       (1.0 - self.value.array());
                 });
}

// ---- softmax family --------------------------------------------------------

namespace {
// Row-wise stable softmax of a plain matrix.
Matrix softmax_rows_value(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double m = x.row(i).maxCoeff();
    Eigen::ArrayXd e = (x.row(i).array() - m).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  return y;
}
}  // namespace

Tensor softmax(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("softmax: empty vector");
  if (x.rows() != 1 && x.cols() != 1)
    throw ShapeError("softmax: expected a vector, got " + shape_str(x));
  auto xn = x.node();
  bool column = x.cols() == 1;
  Matrix flat = column ? Matrix(xn->value.transpose()) : xn->value;
  Matrix y = softmax_rows_value(flat);
  if (column) y.transposeInPlace();
  return make_op(std::move(y), {xn}, [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    ensure_grad(xn.get());
    double dot = (self.grad.array() * self.value.array()).sum();
    xn->grad.array() +=
        self.value.array() * (self.grad.array() - dot);
  });
}

Tensor softmax_rows(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("softmax_rows: empty input");
  auto xn = x.node();
  return make_op(softmax_rows_value(xn->value), {xn}, [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    ensure_grad(xn.get());
    for (Eigen::Index i = 0; i < self.value.rows(); ++i) {
      double dot = self.grad.row(i).dot(self.value.row(i));
      xn->grad.row(i).array() +=
          self.value.row(i).array() * (self.grad.row(i).array() - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("log_softmax_rows: empty input");
  auto xn = x.node();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double m = xn->value.row(i).maxCoeff();
    Eigen::ArrayXd z = xn->value.row(i).array() - m;
    y.row(i) = (z - std::log(z.exp().sum())).matrix();
  }
  return make_op(std::move(y), {xn}, [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    ensure_grad(xn.get());
    for (Eigen::Index i = 0; i < self.value.rows(); ++i) {
      double gsum = self.grad.row(i).sum();
      xn->grad.row(i).array() += self.grad.row(i).array() -
                                 self.value.row(i).array().exp() * gsum;
    }
  });
}

// ---- structure ops ---------------------------------------------------------

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.rows())
    throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                     std::to_string(start + n) + ") out of " +
                     shape_str(a));
  auto an = a.node();
  return make_op(an->value.middleRows(start, n), {an},
                 [an, start, n](TensorNode& self) {
                   if (!an->requires_grad) return;
                   ensure_grad(an.get());
                   an->grad.middleRows(start, n) += self.grad;
                 });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.cols())
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + n) + ") out of " +
                     shape_str(a));
  auto an = a.node();
  return make_op(an->value.middleCols(start, n), {an},
                 [an, start, n](TensorNode& self) {
                   if (!an->requires_grad) return;
                   ensure_grad(an.get());
                   an->grad.middleCols(start, n) += self.grad;
                 });
}

Tensor hconcat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("hconcat: no parts");
  Eigen::Index rows = parts[0].rows(), cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows)
      throw ShapeError("hconcat: row mismatch, " + shape_str(parts[0]) +
                       " vs " + shape_str(p));
    cols += p.cols();
  }
  Matrix v(rows, cols);
  Nodes nodes;
  nodes.reserve(parts.size());
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
    nodes.push_back(p.node());
  }
  return make_op(std::move(v), nodes, [nodes](TensorNode& self) {
    Eigen::Index c = 0;
    for (const auto& n : nodes) {
      if (n->requires_grad) {
        ensure_grad(n.get());
        n->grad += self.grad.middleCols(c, n->value.cols());
      }
      c += n->value.cols();
    }
  });
}

Tensor vconcat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("vconcat: no parts");
  Eigen::Index cols = parts[0].cols(), rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols)
      throw ShapeError("vconcat: column mismatch, " + shape_str(parts[0]) +
                       " vs " + shape_str(p));
    rows += p.rows();
  }
  Matrix v(rows, cols);
  Nodes nodes;
  nodes.reserve(parts.size());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    nodes.push_back(p.node());
  }
  return make_op(std::move(v), nodes, [nodes](TensorNode& self) {
    Eigen::Index r = 0;
    for (const auto& n : nodes) {
      if (n->requires_grad) {
        ensure_grad(n.get());
        n->grad += self.grad.middleRows(r, n->value.rows());
      }
      r += n->value.rows();
    }
  });
}

Tensor rows(const Tensor& a, const std::vector<int>& idx) {
  for (int i : idx)
    if (i < 0 || i >= a.rows())
      throw IndexError("rows: index " + std::to_string(i) + " out of " +
                       std::to_string(a.rows()) + " rows");
  auto an = a.node();
  Matrix v(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (size_t i = 0; i < idx.size(); ++i)
    v.row(static_cast<Eigen::Index>(i)) = an->value.row(idx[i]);
  return make_op(std::move(v), {an}, [an, idx](TensorNode& self) {
    if (!an->requires_grad) return;
    ensure_grad(an.get());
    for (size_t i = 0; i < idx.size(); ++i)
      an->grad.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

Tensor sum_all(const Tensor& a) {
  auto an = a.node();
  Matrix v(1, 1);
  v(0, 0) = an->value.sum();
  return make_op(std::move(v), {an}, [an](TensorNode& self) {
    if (!an->requires_grad) return;
    ensure_grad(an.get());
    an->grad.array() += self.grad(0, 0);
  });
}

Tensor mean_all(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean_all: empty input");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

// ---- losses ----------------------------------------------------------------

Tensor smoothed_ce_sum(const Tensor& logits, const std::vector<int>& targets,
                       double eps, const std::vector<double>& row_mask) {
  if (eps < 0.0 || eps >= 1.0)
    throw ParamError("label smoothing eps must be in [0, 1), got " +
                     std::to_string(eps));
  const Eigen::Index b = logits.rows(), v = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != b ||
      static_cast<Eigen::Index>(row_mask.size()) != b)
    throw ShapeError("smoothed_ce_sum: batch size mismatch");
  for (int t : targets)
    if (t < 0 || t >= v)
      throw IndexError("smoothed_ce_sum: target " + std::to_string(t) +
                       " out of vocabulary " + std::to_string(v));
  auto ln = logits.node();
  // log p and p computed once, captured for the backward pass.
  Matrix logp(b, v);
  for (Eigen::Index i = 0; i < b; ++i) {
    double m = ln->value.row(i).maxCoeff();
    Eigen::ArrayXd z = ln->value.row(i).array() - m;
    logp.row(i) = (z - std::log(z.exp().sum())).matrix();
  }
  const double uniform = eps / static_cast<double>(v);
  const double on_target = 1.0 - eps + uniform;
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    if (row_mask[static_cast<size_t>(i)] == 0.0) continue;
    double l = -uniform * logp.row(i).sum() -
               (on_target - uniform) * logp(i, targets[static_cast<size_t>(i)]);
    total += row_mask[static_cast<size_t>(i)] * l;
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  auto backprop = [ln, targets, row_mask, uniform, on_target,
                   logp = std::move(logp)](TensorNode& self) {
    if (!ln->requires_grad) return;
    ensure_grad(ln.get());
    const double g = self.grad(0, 0);
    for (Eigen::Index i = 0; i < ln->value.rows(); ++i) {
      double w = row_mask[static_cast<size_t>(i)];
      if (w == 0.0) continue;
      // d loss / d logits = softmax - q
      Eigen::ArrayXd p = logp.row(i).array().exp();
      p -= uniform;
      p(targets[static_cast<size_t>(i)]) -= on_target - uniform;
      ln->grad.row(i).array() += g * w * p.transpose();
    }
  };
  return make_op(std::move(out), {ln}, std::move(backprop));
}

Tensor cross_entropy_label_smoothed(const Tensor& logits, int target,
                                    double eps) {
  if (logits.rows() != 1 && logits.cols() != 1)
    throw ShapeError("cross_entropy_label_smoothed: expected a vector, got " +
                     shape_str(logits));
  Tensor row = logits.rows() == 1
                   ? logits
                   : make_op(Matrix(logits.value().transpose()),
                             {logits.node()}, [n = logits.node()](TensorNode& self) {
                               if (!n->requires_grad) return;
                               ensure_grad(n.get());
                               n->grad += self.grad.transpose();
                             });
  return smoothed_ce_sum(row, {target}, eps, {1.0});
}

// ---- batch norm ------------------------------------------------------------

void BatchNormStats::init(Eigen::Index features) {
  running_mean = RowVector::Zero(features);
  running_var = RowVector::Ones(features);
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats* stats, Mode mode,
                  const std::vector<double>* row_weights) {
  const Eigen::Index n = x.rows(), f = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != f || beta.rows() != 1 ||
      beta.cols() != f)
    throw ShapeError("batch_norm: gamma/beta must be 1x" + std::to_string(f) +
                     ", got " + shape_str(gamma) + " and " + shape_str(beta));
  if (row_weights && static_cast<Eigen::Index>(row_weights->size()) != n)
    throw ShapeError("batch_norm: row weight count mismatch");
  if (stats && !stats->initialized()) stats->init(f);

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();

  RowVector mean(f), var(f);
  double wsum = 0.0;
  if (mode == Mode::kTrain) {
    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    if (row_weights)
      for (Eigen::Index i = 0; i < n; ++i)
        w(i) = (*row_weights)[static_cast<size_t>(i)];
    wsum = w.sum();
    if (wsum <= 0.0) throw ContractError("batch_norm: no valid rows");
    mean = (w.transpose() * xn->value) / wsum;
    Matrix centered = xn->value.rowwise() - mean;
    var = (w.transpose() * centered.array().square().matrix()) / wsum;
    if (stats) {
      stats->running_mean =
          stats->momentum * stats->running_mean + (1.0 - stats->momentum) * mean;
      stats->running_var =
          stats->momentum * stats->running_var + (1.0 - stats->momentum) * var;
    }
  } else {
    if (!stats) throw ContractError("batch_norm: eval mode requires stats");
    mean = stats->running_mean;
    var = stats->running_var;
  }

  RowVector denom = var.array().max(kBatchNormVarFloor).sqrt();
  Matrix xhat = (xn->value.rowwise() - mean).array().rowwise() /
                denom.array();
  Matrix y = (xhat.array().rowwise() * RowVector(gn->value.row(0)).array())
                 .matrix();
  y.rowwise() += RowVector(bn->value.row(0));

  if (mode == Mode::kEval) {
    return make_op(std::move(y), {xn, gn, bn},
                   [xn, gn, bn, denom, xhat](TensorNode& self) {
                     if (gn->requires_grad) {
                       ensure_grad(gn.get());
                       gn->grad +=
                           (self.grad.array() * xhat.array()).colwise().sum().matrix();
                     }
                     if (bn->requires_grad) {
                       ensure_grad(bn.get());
                       bn->grad += self.grad.colwise().sum();
                     }
                     if (xn->requires_grad) {
                       ensure_grad(xn.get());
                       xn->grad.array() +=
                           (self.grad.array().rowwise() *
                            (gn->value.row(0).array() / denom.array()));
                     }
                   });
  }

  // Train-mode backward needs the weights and which features hit the floor.
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  if (row_weights)
    for (Eigen::Index i = 0; i < n; ++i)
      w(i) = (*row_weights)[static_cast<size_t>(i)];
  Eigen::Array<bool, 1, Eigen::Dynamic> floored =
      var.array() < kBatchNormVarFloor;

  return make_op(
      std::move(y), {xn, gn, bn},
      [xn, gn, bn, denom, xhat, w, wsum, floored](TensorNode& self) {
        if (gn->requires_grad) {
          ensure_grad(gn.get());
          gn->grad +=
              (self.grad.array() * xhat.array()).colwise().sum().matrix();
        }
        if (bn->requires_grad) {
          ensure_grad(bn.get());
          bn->grad += self.grad.colwise().sum();
        }
        if (!xn->requires_grad) return;
        ensure_grad(xn.get());
        // dxhat = g * gamma; then back through the weighted statistics. The
        // pullback sums run over every row (all outputs share mean/var); the
        // row weight enters as d(mean)/dx_i = w_i / wsum.
        Matrix dxhat =
            (self.grad.array().rowwise() * gn->value.row(0).array()).matrix();
        RowVector sum_dxhat = dxhat.colwise().sum();  // 1 x F
        RowVector sum_dxhat_xhat =
            (dxhat.array() * xhat.array()).colwise().sum();
        for (Eigen::Index j = 0; j < xn->value.cols(); ++j) {
          double inv = 1.0 / denom(j);
          for (Eigen::Index i = 0; i < xn->value.rows(); ++i) {
            double stat = (w(i) / wsum) * sum_dxhat(j);
            if (!floored(j)) stat += xhat(i, j) * (w(i) / wsum) * sum_dxhat_xhat(j);
            xn->grad(i, j) += inv * (dxhat(i, j) - stat);
          }
        }
      });
}

// ---- dropout ---------------------------------------------------------------

Tensor dropout(const Tensor& x, double p, Mode mode, Rng* rng) {
  if (p < 0.0 || p >= 1.0)
    throw ParamError("dropout: p must be in [0, 1), got " + std::to_string(p));
  if (mode == Mode::kEval || p == 0.0) return x;
  if (rng == nullptr) throw ContractError("dropout: train mode needs an rng");
  const double keep = 1.0 - p;
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      mask(i, j) = rng->uniform() >= p ? 1.0 / keep : 0.0;
  auto xn = x.node();
  return make_op((xn->value.array() * mask.array()).matrix(), {xn},
                 [xn, mask](TensorNode& self) {
                   if (!xn->requires_grad) return;
                   ensure_grad(xn.get());
                   xn->grad.array() += self.grad.array() * mask.array();
                 });
}

// ---- attention helpers ------------------------------------------------------

Tensor masked_time_softmax(const Tensor& scores, Eigen::Index batch,
                           Eigen::Index steps, const std::vector<int>& valid) {
  if (scores.cols() != 1 || scores.rows() != batch * steps)
    throw ShapeError("masked_time_softmax: scores must be " +
                     std::to_string(batch * steps) + "x1, got " +
                     shape_str(scores));
  if (static_cast<Eigen::Index>(valid.size()) != batch)
    throw ShapeError("masked_time_softmax: valid length count mismatch");
  for (int v : valid)
    if (v < 1 || v > steps)
      throw ContractError("masked_time_softmax: valid length " +
                          std::to_string(v) + " outside [1, " +
                          std::to_string(steps) + "]");
  auto sn = scores.node();
  Matrix wgt = Matrix::Zero(batch * steps, 1);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int n = valid[static_cast<size_t>(b)];
    double m = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < n; ++t) m = std::max(m, sn->value(t * batch + b, 0));
    double z = 0.0;
    for (int t = 0; t < n; ++t) {
      double e = std::exp(sn->value(t * batch + b, 0) - m);
      wgt(t * batch + b, 0) = e;
      z += e;
    }
    for (int t = 0; t < n; ++t) wgt(t * batch + b, 0) /= z;
  }
  return make_op(std::move(wgt), {sn},
                 [sn, batch, valid](TensorNode& self) {
                   if (!sn->requires_grad) return;
                   ensure_grad(sn.get());
                   for (Eigen::Index b = 0; b < batch; ++b) {
                     const int n = valid[static_cast<size_t>(b)];
                     double dot = 0.0;
                     for (int t = 0; t < n; ++t) {
                       Eigen::Index r = t * batch + b;
                       dot += self.grad(r, 0) * self.value(r, 0);
                     }
                     for (int t = 0; t < n; ++t) {
                       Eigen::Index r = t * batch + b;
                       sn->grad(r, 0) +=
                           self.value(r, 0) * (self.grad(r, 0) - dot);
                     }
                   }
                 });
}

Tensor attention_context(const Tensor& enc, const Tensor& weights,
                         Eigen::Index batch, Eigen::Index steps) {
  if (enc.rows() != batch * steps)
    throw ShapeError("attention_context: encoder states must have " +
                     std::to_string(batch * steps) + " rows, got " +
                     shape_str(enc));
  if (weights.rows() != batch * steps || weights.cols() != 1)
    throw ShapeError("attention_context: weights must be " +
                     std::to_string(batch * steps) + "x1, got " +
                     shape_str(weights));
  auto en = enc.node(), wn = weights.node();
  Matrix ctx = Matrix::Zero(batch, enc.cols());
  for (Eigen::Index t = 0; t < steps; ++t)
    for (Eigen::Index b = 0; b < batch; ++b)
      ctx.row(b) += wn->value(t * batch + b, 0) * en->value.row(t * batch + b);
  return make_op(std::move(ctx), {en, wn},
                 [en, wn, batch, steps](TensorNode& self) {
                   for (Eigen::Index t = 0; t < steps; ++t) {
                     for (Eigen::Index b = 0; b < batch; ++b) {
                       const Eigen::Index r = t * batch + b;
                       if (en->requires_grad) {
                         ensure_grad(en.get());
                         en->grad.row(r) +=
                             wn->value(r, 0) * self.grad.row(b);
                       }
                       if (wn->requires_grad) {
                         ensure_grad(wn.get());
                         wn->grad(r, 0) +=
                             en->value.row(r).dot(self.grad.row(b));
                       }
                     }
                   }
                 });
}

}  // namespace phonest
