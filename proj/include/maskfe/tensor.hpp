// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode autodiff over dense 2-D double tensors.
// Graphs are built per step (define-by-run) and discarded; backward is
// single-threaded and deterministic.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace maskfe {

// Row-major so that checkpoint serialization matches the in-memory layout.
using Arr = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TensorNode {
  Arr value;
  Arr grad;                 // valid iff has_grad
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Propagates this node's grad into its parents' grad buffers.
  std::function<void(TensorNode&)> backward_fn;
  std::string name;         // nonempty for named parameters
};

// Value-semantics handle to a graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor constant(Arr v);
  static Tensor scalar(double v);
  static Tensor param(Arr v, std::string name);

  bool valid() const { return node_ != nullptr; }
  const Arr& value() const { return node_->value; }
  Arr& mutable_value() { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->name; }

  bool has_grad() const { return node_->has_grad; }
  const Arr& grad() const { return node_->grad; }

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// --- graph construction -----------------------------------------------------

Tensor transpose(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
// add/mul/pow broadcast the second operand over the first when it is a
// 1 x n row, an m x 1 column, or a 1 x 1 scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor l1_norm(const Tensor& a);
Tensor squared_l2(const Tensor& a);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Eigen::Index c0, Eigen::Index n);
Tensor gather_rows(const Tensor& a, const std::vector<Eigen::Index>& idx);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);
// w is kernel x channels, b is 1 x channels; frame t sees frames [t-K+1, t],
// zero-padded on the left.
Tensor causal_depthwise_conv(const Tensor& x, const Tensor& w, const Tensor& b);
// Row-wise softmax of (scores + additive_mask); the mask is plain data.
Tensor softmax_masked(const Tensor& scores, const Arr& additive_mask);
// out = base^exponent. base must be strictly positive (sigmoid upstream).
Tensor pow(const Tensor& base, const Tensor& exponent);
// out = max(x, beta); gradient passes iff x > beta. beta in [0, 1).
Tensor floor_max(const Tensor& x, double beta);
// Forward identity (bit-exact), contributes zero gradient to ancestors.
Tensor stop_gradient(const Tensor& x);

// --- backward ---------------------------------------------------------------

// Reverse accumulation from a scalar loss. Grad buffers of every node in the
// reachable subgraph are reset first, so repeated calls are independent.
void backward(const Tensor& loss);

// --- gradient checking ------------------------------------------------------

struct GradReport {
  double max_rel_error = 0.0;
  int worst_param = -1;       // position in the checked parameter list
  long worst_index = -1;      // flat element index within that parameter
  std::string worst_param_name;
  double analytic = 0.0;
  double numeric = 0.0;
  bool nonfinite = false;
};

// Fourth-order central finite differences over every element of every
// parameter. fn must rebuild the loss graph from the parameters' current
// values. Detach points (stop_gradient) are held at their base-evaluation
// values during the perturbed evaluations, so the probed function is exactly
// the one whose gradient the backward pass defines. A borderline element is
// re-probed over a small ladder of steps and keeps its best estimate, since
// the optimal step trades truncation against rounding per element. Reported
// relative error uses an absolute denominator floor of 1e-4: derivatives
// below the finite-difference resolution limit (~1e-8 absolute for a loss of
// this magnitude in 64-bit) are compared absolutely rather than relatively.
GradReport grad_check(const std::function<Tensor()>& fn,
                      const std::vector<Tensor>& params, double eps);

// Same check restricted to a deterministic evenly-strided sample of at most
// max_per_param elements per parameter; every parameter is still probed.
GradReport grad_check_sampled(const std::function<Tensor()>& fn,
                              const std::vector<Tensor>& params, double eps,
                              long max_per_param);

}  // namespace maskfe
