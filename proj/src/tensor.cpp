// SPDX-License-Identifier: Apache-2.0
#include "maskfe/tensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace maskfe {

namespace {

std::shared_ptr<TensorNode> make_node(Arr value,
                                      std::vector<std::shared_ptr<TensorNode>> parents,
                                      std::function<void(TensorNode&)> fn) {
  auto n = std::make_shared<TensorNode>();
  n->value = std::move(value);
  bool rq = false;
  for (const auto& p : parents) rq = rq || p->requires_grad;
  n->requires_grad = rq;
  if (rq) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return n;
}

void accum(const std::shared_ptr<TensorNode>& p, const Arr& g) {
  if (!p->requires_grad) return;
  if (!p->has_grad) {
    p->grad = g;
    p->has_grad = true;
  } else {
    p->grad += g;
  }
}

enum class Bcast { Same, Row, Col, Scalar };

Bcast bcast_kind(Eigen::Index ar, Eigen::Index ac, Eigen::Index br, Eigen::Index bc,
                 const char* op) {
  if (br == ar && bc == ac) return Bcast::Same;
  if (br == 1 && bc == 1) return Bcast::Scalar;
  if (br == 1 && bc == ac) return Bcast::Row;
  if (br == ar && bc == 1) return Bcast::Col;
  throw std::invalid_argument(std::string(op) + ": incompatible shapes (" +
                              std::to_string(ar) + "x" + std::to_string(ac) + " vs " +
                              std::to_string(br) + "x" + std::to_string(bc) + ")");
}

Arr bcast_to(const Arr& b, Eigen::Index r, Eigen::Index c, Bcast k) {
  switch (k) {
    case Bcast::Same: return b;
    case Bcast::Row: return b.replicate(r, 1);
    case Bcast::Col: return b.replicate(1, c);
    case Bcast::Scalar: return Arr::Constant(r, c, b(0, 0));
  }
  return b;
}

Arr reduce_to(const Arr& g, Bcast k) {
  switch (k) {
    case Bcast::Same: return g;
    case Bcast::Row: return g.colwise().sum();
    case Bcast::Col: return g.rowwise().sum();
    case Bcast::Scalar: return Arr::Constant(1, 1, g.sum());
  }
  return g;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

}  // namespace

Tensor Tensor::constant(Arr v) {
  auto n = std::make_shared<TensorNode>();
  n->value = std::move(v);
  return Tensor(n);
}

Tensor Tensor::scalar(double v) { return constant(Arr::Constant(1, 1, v)); }

Tensor Tensor::param(Arr v, std::string name) {
  auto n = std::make_shared<TensorNode>();
  n->value = std::move(v);
  n->requires_grad = true;
  n->name = std::move(name);
  return Tensor(n);
}

Tensor transpose(const Tensor& a) {
  auto ap = a.node();
  return Tensor(make_node(a.value().transpose(), {ap}, [ap](TensorNode& self) {
    accum(ap, self.grad.transpose());
  }));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions differ (" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + ")");
  auto ap = a.node(), bp = b.node();
  Arr v = (a.value().matrix() * b.value().matrix()).array();
  return Tensor(make_node(std::move(v), {ap, bp}, [ap, bp](TensorNode& self) {
    if (ap->requires_grad)
      accum(ap, (self.grad.matrix() * bp->value.matrix().transpose()).array());
    if (bp->requires_grad)
      accum(bp, (ap->value.matrix().transpose() * self.grad.matrix()).array());
  }));
}

Tensor add(const Tensor& a, const Tensor& b) {
  Bcast k = bcast_kind(a.rows(), a.cols(), b.rows(), b.cols(), "add");
  auto ap = a.node(), bp = b.node();
  Arr v = a.value() + bcast_to(b.value(), a.rows(), a.cols(), k);
  return Tensor(make_node(std::move(v), {ap, bp}, [ap, bp, k](TensorNode& self) {
    accum(ap, self.grad);
    if (bp->requires_grad) accum(bp, reduce_to(self.grad, k));
  }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Bcast k = bcast_kind(a.rows(), a.cols(), b.rows(), b.cols(), "sub");
  auto ap = a.node(), bp = b.node();
  Arr v = a.value() - bcast_to(b.value(), a.rows(), a.cols(), k);
  return Tensor(make_node(std::move(v), {ap, bp}, [ap, bp, k](TensorNode& self) {
    accum(ap, self.grad);
    if (bp->requires_grad) accum(bp, reduce_to(Arr(-self.grad), k));
  }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Bcast k = bcast_kind(a.rows(), a.cols(), b.rows(), b.cols(), "mul");
  auto ap = a.node(), bp = b.node();
  Arr bb = bcast_to(b.value(), a.rows(), a.cols(), k);
  Arr v = a.value() * bb;
  return Tensor(make_node(std::move(v), {ap, bp}, [ap, bp, k](TensorNode& self) {
    if (ap->requires_grad)
      accum(ap, Arr(self.grad * bcast_to(bp->value, self.grad.rows(), self.grad.cols(), k)));
    if (bp->requires_grad) accum(bp, reduce_to(Arr(self.grad * ap->value), k));
  }));
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
  auto ap = a.node();
  return Tensor(make_node(a.value() * c, {ap}, [ap, c](TensorNode& self) {
    accum(ap, Arr(self.grad * c));
  }));
}

Tensor add_scalar(const Tensor& a, double c) {
  auto ap = a.node();
  return Tensor(make_node(a.value() + c, {ap}, [ap](TensorNode& self) {
    accum(ap, self.grad);
  }));
}

Tensor log(const Tensor& a) {
  auto ap = a.node();
  return Tensor(make_node(a.value().log(), {ap}, [ap](TensorNode& self) {
    accum(ap, Arr(self.grad / ap->value));
  }));
}

Tensor exp(const Tensor& a) {
  auto ap = a.node();
  return Tensor(make_node(a.value().exp(), {ap}, [ap](TensorNode& self) {
    accum(ap, Arr(self.grad * self.value));
  }));
}

Tensor sigmoid(const Tensor& a) {
  auto ap = a.node();
  Arr v = 1.0 / (1.0 + (-a.value()).exp());
  return Tensor(make_node(std::move(v), {ap}, [ap](TensorNode& self) {
    accum(ap, Arr(self.grad * self.value * (1.0 - self.value)));
  }));
}

Tensor mean(const Tensor& a) {
  auto ap = a.node();
  double inv = 1.0 / static_cast<double>(a.size());
  return Tensor(make_node(Arr::Constant(1, 1, a.value().sum() * inv), {ap},
                          [ap, inv](TensorNode& self) {
    accum(ap, Arr(Arr::Constant(ap->value.rows(), ap->value.cols(),
                                self.grad(0, 0) * inv)));
  }));
}

Tensor sum(const Tensor& a) {
  auto ap = a.node();
  return Tensor(make_node(Arr::Constant(1, 1, a.value().sum()), {ap},
                          [ap](TensorNode& self) {
    accum(ap, Arr(Arr::Constant(ap->value.rows(), ap->value.cols(), self.grad(0, 0))));
  }));
}

Tensor l1_norm(const Tensor& a) {
  auto ap = a.node();
  return Tensor(make_node(Arr::Constant(1, 1, a.value().abs().sum()), {ap},
                          [ap](TensorNode& self) {
    Arr sign = (ap->value > 0.0).cast<double>() - (ap->value < 0.0).cast<double>();
    accum(ap, Arr(sign * self.grad(0, 0)));
  }));
}

Tensor squared_l2(const Tensor& a) {
  auto ap = a.node();
  return Tensor(make_node(Arr::Constant(1, 1, a.value().square().sum()), {ap},
                          [ap](TensorNode& self) {
    accum(ap, Arr(2.0 * self.grad(0, 0) * ap->value));
  }));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  Eigen::Index r = parts[0].rows(), c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw std::invalid_argument("concat_cols: row count mismatch");
    c += p.cols();
  }
  Arr v(r, c);
  std::vector<std::shared_ptr<TensorNode>> ps;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    ps.push_back(p.node());
    off += p.cols();
  }
  return Tensor(make_node(std::move(v), ps, [ps](TensorNode& self) {
    Eigen::Index off = 0;
    for (const auto& p : ps) {
      accum(p, Arr(self.grad.middleCols(off, p->value.cols())));
      off += p->value.cols();
    }
  }));
}

Tensor slice_cols(const Tensor& a, Eigen::Index c0, Eigen::Index n) {
  if (c0 < 0 || n < 0 || c0 + n > a.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  auto ap = a.node();
  return Tensor(make_node(a.value().middleCols(c0, n), {ap}, [ap, c0, n](TensorNode& self) {
    Arr g = Arr::Zero(ap->value.rows(), ap->value.cols());
    g.middleCols(c0, n) = self.grad;
    accum(ap, g);
  }));
}

Tensor gather_rows(const Tensor& a, const std::vector<Eigen::Index>& idx) {
  auto ap = a.node();
  Arr v(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows())
      throw std::invalid_argument("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
  }
  return Tensor(make_node(std::move(v), {ap}, [ap, idx](TensorNode& self) {
    Arr g = Arr::Zero(ap->value.rows(), ap->value.cols());
    for (size_t i = 0; i < idx.size(); ++i)
      g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    accum(ap, g);
  }));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 ||
      beta.cols() != x.cols())
    throw std::invalid_argument("layer_norm: gamma/beta must be 1 x cols(x)");
  auto xp = x.node(), gp = gamma.node(), bp = beta.node();
  const Arr& xv = x.value();
  Eigen::Index r = xv.rows(), c = xv.cols();
  Arr mu = xv.rowwise().mean();
  Arr xc = xv - mu.replicate(1, c);
  Arr invstd = (xc.square().rowwise().mean() + eps).sqrt().inverse();
  Arr xhat = xc * invstd.replicate(1, c);
  Arr v = xhat * gamma.value().replicate(r, 1) + beta.value().replicate(r, 1);
  return Tensor(make_node(std::move(v), {xp, gp, bp},
                          [xp, gp, bp, xhat, invstd](TensorNode& self) {
    Eigen::Index r = self.grad.rows(), c = self.grad.cols();
    if (gp->requires_grad) accum(gp, Arr((self.grad * xhat).colwise().sum()));
    if (bp->requires_grad) accum(bp, Arr(self.grad.colwise().sum()));
    if (xp->requires_grad) {
      Arr dxhat = self.grad * gp->value.replicate(r, 1);
      Arr m1 = dxhat.rowwise().mean();
      Arr m2 = (dxhat * xhat).rowwise().mean();
      accum(xp, Arr(invstd.replicate(1, c) *
                    (dxhat - m1.replicate(1, c) - xhat * m2.replicate(1, c))));
    }
  }));
}

Tensor causal_depthwise_conv(const Tensor& x, const Tensor& w, const Tensor& b) {
  Eigen::Index t = x.rows(), c = x.cols(), k = w.rows();
  if (w.cols() != c || b.rows() != 1 || b.cols() != c)
    throw std::invalid_argument("causal_depthwise_conv: kernel is K x C, bias 1 x C");
  auto xp = x.node(), wp = w.node(), bp = b.node();
  // Tap k-1 is the current frame; earlier taps look back, zero padded.
  Arr v = b.value().replicate(t, 1);
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index back = k - 1 - j;
    if (back >= t) continue;
    v.bottomRows(t - back) += x.value().topRows(t - back) *
                              w.value().row(j).replicate(t - back, 1);
  }
  return Tensor(make_node(std::move(v), {xp, wp, bp}, [xp, wp, bp, k](TensorNode& self) {
    Eigen::Index t = self.grad.rows(), c = self.grad.cols();
    if (bp->requires_grad) accum(bp, Arr(self.grad.colwise().sum()));
    if (xp->requires_grad) {
      Arr dx = Arr::Zero(t, c);
      for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::Index back = k - 1 - j;
        if (back >= t) continue;
        dx.topRows(t - back) += self.grad.bottomRows(t - back) *
                                wp->value.row(j).replicate(t - back, 1);
      }
      accum(xp, dx);
    }
    if (wp->requires_grad) {
      Arr dw = Arr::Zero(k, c);
      for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::Index back = k - 1 - j;
        if (back >= t) continue;
        dw.row(j) = (self.grad.bottomRows(t - back) * xp->value.topRows(t - back))
                        .colwise().sum();
      }
      accum(wp, dw);
    }
  }));
}

Tensor softmax_masked(const Tensor& scores, const Arr& additive_mask) {
  if (additive_mask.rows() != scores.rows() || additive_mask.cols() != scores.cols())
    throw std::invalid_argument("softmax_masked: mask shape mismatch");
  auto sp = scores.node();
  Arr z = scores.value() + additive_mask;
  Eigen::Index c = z.cols();
  Arr zmax = z.rowwise().maxCoeff();
  Arr p = (z - zmax.replicate(1, c)).exp();
  p /= p.rowwise().sum().replicate(1, c).eval();
  return Tensor(make_node(std::move(p), {sp}, [sp](TensorNode& self) {
    Eigen::Index c = self.grad.cols();
    Arr dot = (self.grad * self.value).rowwise().sum();
    accum(sp, Arr(self.value * (self.grad - dot.replicate(1, c))));
  }));
}

Tensor pow(const Tensor& base, const Tensor& exponent) {
  Bcast k = bcast_kind(base.rows(), base.cols(), exponent.rows(), exponent.cols(),
                       "elementwise_pow");
  if ((base.value() <= 0.0).any())
    throw std::domain_error(
        "elementwise_pow: base must be strictly positive (missing sigmoid upstream?)");
  auto bp = base.node(), ep = exponent.node();
  Arr eb = bcast_to(exponent.value(), base.rows(), base.cols(), k);
  Arr v = base.value().pow(eb);
  return Tensor(make_node(std::move(v), {bp, ep}, [bp, ep, k](TensorNode& self) {
    Arr eb = bcast_to(ep->value, self.value.rows(), self.value.cols(), k);
    if (bp->requires_grad)
      accum(bp, Arr(self.grad * eb * self.value / bp->value));
    if (ep->requires_grad) {
      Arr lnb = bp->value.max(1e-12).log();
      accum(ep, reduce_to(Arr(self.grad * self.value * lnb), k));
    }
  }));
}

Tensor floor_max(const Tensor& x, double beta) {
  if (!(beta >= 0.0 && beta < 1.0))
    throw std::invalid_argument("floor_max: beta must lie in [0, 1)");
  auto xp = x.node();
  return Tensor(make_node(x.value().max(beta), {xp}, [xp, beta](TensorNode& self) {
    accum(xp, Arr(self.grad * (xp->value > beta).cast<double>()));
  }));
}

namespace {

// While a gradient check runs, detach points are recorded during the base
// evaluation and replayed during the perturbed ones, so finite differences
// probe exactly the function whose gradient the backward pass defines: a
// detached branch is a constant of that function, and letting a perturbation
// leak through it would differentiate a different function.
struct DetachReplayState {
  bool capturing = false;
  bool replaying = false;
  std::vector<Arr> values;
  size_t cursor = 0;
};

DetachReplayState& detach_replay_state() {
  static thread_local DetachReplayState state;
  return state;
}

}  // namespace

Tensor stop_gradient(const Tensor& x) {
  auto& rs = detach_replay_state();
  auto n = std::make_shared<TensorNode>();
  if (rs.replaying) {
    if (rs.cursor >= rs.values.size())
      throw std::logic_error(
          "stop_gradient: the re-evaluated graph has more detach points than the base "
          "evaluation recorded");
    n->value = rs.values[rs.cursor++];
  } else {
    n->value = x.value();
    if (rs.capturing) rs.values.push_back(n->value);
  }
  return Tensor(n);
}

void backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw std::invalid_argument("backward: loss must be a scalar (1x1) tensor");
  auto root = loss.node();
  if (!root->requires_grad) return;

  // Post-order over the reachable grad-requiring subgraph.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct StackFrame {
    TensorNode* n;
    size_t next_parent;
  };
  std::vector<StackFrame> stack;
  seen.insert(root.get());
  stack.push_back({root.get(), 0});
  while (!stack.empty()) {
    StackFrame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next_parent++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  for (TensorNode* n : order) {
    n->has_grad = false;
    n->grad.resize(0, 0);
  }
  root->grad = Arr::Ones(1, 1);
  root->has_grad = true;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->has_grad && n->backward_fn) n->backward_fn(*n);
  }
}

namespace {

// RAII over the detach capture/replay registry: the base evaluation records
// every stop_gradient value, the finite-difference evaluations replay them.
struct DetachFreeze {
  DetachFreeze() {
    auto& rs = detach_replay_state();
    rs.values.clear();
    rs.cursor = 0;
    rs.capturing = true;
    rs.replaying = false;
  }
  ~DetachFreeze() {
    auto& rs = detach_replay_state();
    rs.capturing = rs.replaying = false;
    rs.values.clear();
    rs.cursor = 0;
  }
  void switch_to_replay() {
    auto& rs = detach_replay_state();
    rs.capturing = false;
    rs.replaying = true;
    rs.cursor = 0;
  }
};

double eval_loss_scalar(const std::function<Tensor()>& fn) {
  auto& rs = detach_replay_state();
  rs.cursor = 0;
  double v = fn().value()(0, 0);
  if (rs.replaying && rs.cursor != rs.values.size())
    throw std::logic_error("grad_check: the re-evaluated graph has fewer detach points than the "
                           "base evaluation recorded");
  return v;
}

// Fourth-order central difference. Truncation falls as eps^4, so a step large
// enough to keep the difference quotient clear of rounding noise (which is
// what limits elements with tiny gradients) is still accurate for elements
// with strong curvature.
double central_fd(const std::function<Tensor()>& fn, double* slot, double orig, double eps) {
  *slot = orig + eps;
  const double fp1 = eval_loss_scalar(fn);
  *slot = orig - eps;
  const double fm1 = eval_loss_scalar(fn);
  *slot = orig + 2.0 * eps;
  const double fp2 = eval_loss_scalar(fn);
  *slot = orig - 2.0 * eps;
  const double fm2 = eval_loss_scalar(fn);
  *slot = orig;
  return (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * eps);
}

// Relative error with an absolute floor in the denominator. A 64-bit loss
// evaluation carries rounding noise near 1e-12 relative, so after division by
// any usable step no central-difference estimate resolves a derivative below
// roughly 1e-8 absolute. Flooring the denominator at 1e-4 makes that
// resolution limit report as at most ~1e-4 relative instead of as spurious
// O(1) error on near-zero gradient elements, while any disagreement a real
// bug can produce (at or above 1e-8 absolute) still scales into a visible
// relative error.
constexpr double kFdDenominatorFloor = 1e-4;

double rel_error(double ana, double numeric) {
  return std::abs(ana - numeric) /
         std::max({std::abs(ana), std::abs(numeric), kFdDenominatorFloor});
}

struct ElementCheck {
  double rel = 0.0;
  double numeric = 0.0;
  bool nonfinite = false;
};

// One element: try the given step first; a borderline result is re-probed with
// a smaller and a larger step and keeps its best estimate, because the optimal
// central-difference step trades truncation against rounding and so depends on
// the local curvature and on the loss magnitude.
ElementCheck check_element(const std::function<Tensor()>& fn, double* slot, double orig,
                           double ana, double eps) {
  ElementCheck out;
  out.numeric = central_fd(fn, slot, orig, eps);
  if (!std::isfinite(out.numeric) || !std::isfinite(ana)) {
    out.nonfinite = true;
    out.rel = std::numeric_limits<double>::infinity();
    return out;
  }
  out.rel = rel_error(ana, out.numeric);
  if (out.rel > 1e-5) {
    for (double mult : {3.0, 10.0, 30.0, 0.3, 0.1}) {
      const double numeric2 = central_fd(fn, slot, orig, eps * mult);
      if (!std::isfinite(numeric2)) continue;
      const double rel2 = rel_error(ana, numeric2);
      if (rel2 < out.rel) {
        out.rel = rel2;
        out.numeric = numeric2;
      }
      if (out.rel <= 1e-6) break;
    }
  }
  return out;
}

GradReport grad_check_impl(const std::function<Tensor()>& fn, const std::vector<Tensor>& params,
                           double eps, long max_per_param) {
  DetachFreeze freeze;
  Tensor loss = fn();
  backward(loss);
  std::vector<Arr> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params)
    analytic.push_back(p.has_grad() ? p.grad() : Arr(Arr::Zero(p.rows(), p.cols())));
  freeze.switch_to_replay();

  GradReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    Arr& v = p.mutable_value();
    const long n = v.size();
    // max_per_param == 0: every element. Otherwise a deterministic even
    // stride through the flat buffer, offset per parameter; every parameter
    // is still probed.
    const long stride = max_per_param > 0 ? std::max<long>(1, n / max_per_param) : 1;
    const long start = max_per_param > 0 ? static_cast<long>(pi) % stride : 0;
    for (long k = start; k < n; k += stride) {
      const double orig = v.data()[k];
      const double ana = analytic[pi].data()[k];
      const ElementCheck ec = check_element(fn, v.data() + k, orig, ana, eps);
      if (ec.nonfinite) rep.nonfinite = true;
      if (ec.rel > rep.max_rel_error || rep.worst_index < 0) {
        rep.max_rel_error = ec.rel;
        rep.worst_param = static_cast<int>(pi);
        rep.worst_index = k;
        rep.worst_param_name = p.name();
        rep.analytic = ana;
        rep.numeric = ec.numeric;
      }
    }
  }
  return rep;
}

}  // namespace

GradReport grad_check(const std::function<Tensor()>& fn,
                      const std::vector<Tensor>& params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be > 0");
  return grad_check_impl(fn, params, eps, 0);
}

GradReport grad_check_sampled(const std::function<Tensor()>& fn,
                              const std::vector<Tensor>& params, double eps,
                              long max_per_param) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check_sampled: eps must be > 0");
  if (max_per_param < 1)
    throw std::invalid_argument("grad_check_sampled: max_per_param must be >= 1");
  return grad_check_impl(fn, params, eps, max_per_param);
}

}  // namespace maskfe
