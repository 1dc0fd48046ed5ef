// phonest/tensor.h

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

#ifndef PHONEST_TENSOR_H_
#define PHONEST_TENSOR_H_

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "phonest/common.h"
#include "phonest/rng.h"

namespace phonest {

// All numerics are dense 64-bit reals. Desk-scale models are small; f64 keeps
// the finite-difference gradient checks tight.
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct TensorNode;

// Reverse-mode autodiff is tape-free in the pointer sense: each node links to
// its parents, and backward() topologically sweeps the DAG hanging off the
// loss. Dropping the last Tensor handle to a graph frees it.
struct TensorNode {
  Matrix value;
  Matrix grad;  // empty until backward touches this node
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Accumulates this node's grad into its parents' grads.
  std::function<void(TensorNode&)> backprop;
};

// Value-semantic handle to a node. Copying a Tensor aliases the same node.
class Tensor {
 public:
  Tensor() = default;

  // Trainable leaf: participates in backward(), accumulates .grad.
  static Tensor leaf(Matrix value);
  // Non-trainable value.
  static Tensor constant(Matrix value);
  static Tensor scalar(double v);
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const;
  // Direct mutation of a leaf's storage (optimizer updates, norm projection).
  Matrix& mutable_value();
  const Matrix& grad() const;
  bool has_grad() const;
  void zero_grad();
  bool requires_grad() const;
  bool is_leaf() const;

  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Eigen::Index size() const { return value().size(); }
  // Extent list; storage is dense row x col.
  std::vector<Eigen::Index> shape() const { return {rows(), cols()}; }

  std::shared_ptr<TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// While a guard is alive on this thread, ops do not record parents or
// backprop closures; everything behaves as a constant. Used for decoding and
// validation passes.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Runs reverse-mode accumulation from a scalar loss. Leaf grads accumulate
// across calls; interior grads are reset per call. Throws ContractError if
// loss is not 1x1, NumericError if the loss value is not finite.
void backward(const Tensor& loss);

// ---- differentiable operations -------------------------------------------
// Free functions; each checks shapes up front and throws ShapeError naming
// both operands on mismatch.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
// a (n x m) + row r (1 x m) broadcast over rows.
Tensor add_rowvec(const Tensor& a, const Tensor& r);
Tensor tanh_of(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Softmax over all entries of a vector-shaped tensor (n x 1 or 1 x n).
// Max-subtracted for stability; output sums to 1 within 1e-12.
Tensor softmax(const Tensor& x);
// Row-wise softmax / log-softmax of a matrix.
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index n);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index n);
Tensor hconcat(const std::vector<Tensor>& parts);
Tensor vconcat(const std::vector<Tensor>& parts);
// Row gather: out.row(i) = a.row(idx[i]). Repeated indices scatter-add in the
// backward pass, which makes this double as the embedding lookup.
Tensor rows(const Tensor& a, const std::vector<int>& idx);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Label-smoothed cross entropy of one logit vector against a target index:
//   loss = -sum_i q_i log softmax(logits)_i,  q_i = (1-eps)[i=target] + eps/V.
Tensor cross_entropy_label_smoothed(const Tensor& logits, int target,
                                    double eps);
// Batched, masked form over rows of logits (B x V). Returns the SUM over rows
// of row_mask[i] * loss_i; callers divide by their own position count.
Tensor smoothed_ce_sum(const Tensor& logits, const std::vector<int>& targets,
                       double eps, const std::vector<double>& row_mask);

// ---- batch norm ------------------------------------------------------------

// Running statistics for one batch-norm layer, updated in train mode by
// exponential moving average and read in eval mode.
struct BatchNormStats {
  RowVector running_mean;  // 1 x F
  RowVector running_var;   // 1 x F
  double momentum = 0.9;
  void init(Eigen::Index features);
  bool initialized() const { return running_mean.size() > 0; }
};

// x holds batch*time rows by F features. Train mode normalizes per feature
// over all (optionally weighted) rows with population variance, then updates
// the running stats; eval mode normalizes with the running stats. Rows with
// weight 0 are excluded from the statistics but still normalized, which is
// how padded positions are kept out of the batch statistics.
// Variance is floored at 1e-8 before the division.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats* stats, Mode mode,
                  const std::vector<double>* row_weights = nullptr);

// Inverted dropout: train mode zeroes entries with probability p and scales
// survivors by 1/(1-p); eval mode is the identity. Mask draws consume rng in
// row-major order. Requires 0 <= p < 1.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng* rng);

// ---- attention helpers -----------------------------------------------------
// Sequences are stored time-major: row t*batch + b is element b at step t.

// Softmax over the `steps` entries of each batch element, restricted to
// t < valid[b]; masked positions get weight exactly 0. scores is
// (steps*batch) x 1.
Tensor masked_time_softmax(const Tensor& scores, Eigen::Index batch,
                           Eigen::Index steps, const std::vector<int>& valid);
// context[b] = sum_t weights[t*batch+b] * enc.row(t*batch+b); (batch x H).
Tensor attention_context(const Tensor& enc, const Tensor& weights,
                         Eigen::Index batch, Eigen::Index steps);

// Throws NumericError if any entry of m is NaN or infinite.
void check_finite(const Matrix& m, const std::string& what);

std::string shape_str(const Tensor& t);

}  // namespace phonest

#endif  // PHONEST_TENSOR_H_
