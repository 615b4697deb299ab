#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/SpecialFunctions>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

// Reverse-mode automatic differentiation over dense matrices, supplying
// exactly the operations the surrogate architectures need. Values are Eigen
// matrices templated on the scalar type (double for training and testing,
// float selectable for fast inference).

namespace wakeforge::ad {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Thread-local gradient recording switch (graphs are confined to one thread).
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

[[noreturn]] inline void shape_error(const std::string& op, Eigen::Index r1, Eigen::Index c1,
                                     Eigen::Index r2, Eigen::Index c2) {
  std::ostringstream os;
  os << op << ": incompatible shapes (" << r1 << "x" << c1 << ") and (" << r2 << "x" << c2 << ")";
  throw std::invalid_argument(os.str());
}

template <class Scalar>
class Tensor {
 public:
  struct Node {
    Mat<Scalar> value;
    Mat<Scalar> grad;
    bool requires_grad = false;
    bool grad_live = false;  // grad allocated and accumulating
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Mat<Scalar>& g) {
      if (!grad_live) {
        grad = g;
        grad_live = true;
      } else {
        grad += g;
      }
    }
  };

  Tensor() = default;

  static Tensor leaf(Mat<Scalar> value, bool requires_grad) {
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->value = std::move(value);
    t.n_->requires_grad = requires_grad;
    return t;
  }
  static Tensor param(Mat<Scalar> value) { return leaf(std::move(value), true); }
  static Tensor constant(Mat<Scalar> value) { return leaf(std::move(value), false); }

  bool defined() const { return static_cast<bool>(n_); }
  const Mat<Scalar>& value() const { return n_->value; }
  Mat<Scalar>& value_mut() { return n_->value; }
  Eigen::Index rows() const { return n_->value.rows(); }
  Eigen::Index cols() const { return n_->value.cols(); }
  bool requires_grad() const { return n_->requires_grad; }
  bool has_grad() const { return n_->grad_live; }

  const Mat<Scalar>& grad() const {
    if (!n_->grad_live) throw std::logic_error("Tensor::grad: no gradient accumulated");
    return n_->grad;
  }

  void zero_grad() {
    n_->grad_live = false;
    n_->grad.resize(0, 0);
  }

  /// Backpropagate from a scalar (1x1) tensor.
  void backward() const {
    if (rows() != 1 || cols() != 1)
      throw std::invalid_argument("Tensor::backward: output must be a 1x1 scalar");
    // post-order over the reachable grad-requiring subgraph
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    if (n_->requires_grad) stack.emplace_back(n_.get(), 0);
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        Node* parent = node->parents[idx++].get();
        if (parent->requires_grad && seen.insert(parent).second)
          stack.emplace_back(parent, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    if (order.empty()) return;  // no grads requested anywhere
    n_->accumulate(Mat<Scalar>::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward && (*it)->grad_live) (*it)->backward(**it);
  }

  static Tensor make_op(Mat<Scalar> value, std::vector<Tensor> parents,
                        std::function<void(Node&)> backward) {
    bool need = grad_mode();
    if (need) {
      need = false;
      for (const Tensor& p : parents) need = need || p.requires_grad();
    }
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->value = std::move(value);
    t.n_->requires_grad = need;
    if (need) {
      t.n_->parents.reserve(parents.size());
      for (Tensor& p : parents) t.n_->parents.push_back(std::move(p.n_));
      t.n_->backward = std::move(backward);
    }
    return t;
  }

  std::shared_ptr<Node> node() const { return n_; }

 private:
  std::shared_ptr<Node> n_;
};

// ---------------------------------------------------------------------------
// ops

template <class Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.rows(), a.cols(), b.rows(), b.cols());
  using T = Tensor<Scalar>;
  auto an = a.node();
  auto bn = b.node();
  return T::make_op(a.value() * b.value(), {a, b}, [an, bn](typename T::Node& self) {
    if (an->requires_grad) an->accumulate(self.grad * bn->value.transpose());
    if (bn->requires_grad) bn->accumulate(an->value.transpose() * self.grad);
  });
}

template <class Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  using T = Tensor<Scalar>;
  auto an = a.node();
  return T::make_op(a.value().transpose(), {a}, [an](typename T::Node& self) {
    if (an->requires_grad) an->accumulate(self.grad.transpose());
  });
}

/// Element-wise add; also accepts a 1xN right operand broadcast over rows.
template <class Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  using T = Tensor<Scalar>;
  auto an = a.node();
  auto bn = b.node();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return T::make_op(a.value() + b.value(), {a, b}, [an, bn](typename T::Node& self) {
      if (an->requires_grad) an->accumulate(self.grad);
      if (bn->requires_grad) bn->accumulate(self.grad);
    });
  }
  if (b.rows() == 1 && b.cols() == a.cols()) {
    Mat<Scalar> v = a.value();
    v.rowwise() += b.value().row(0);
    return T::make_op(std::move(v), {a, b}, [an, bn](typename T::Node& self) {
      if (an->requires_grad) an->accumulate(self.grad);
      if (bn->requires_grad) bn->accumulate(self.grad.colwise().sum());
    });
  }
  shape_error("add", a.rows(), a.cols(), b.rows(), b.cols());
}

template <class Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    shape_error("sub", a.rows(), a.cols(), b.rows(), b.cols());
  using T = Tensor<Scalar>;
  auto an = a.node();
  auto bn = b.node();
  return T::make_op(a.value() - b.value(), {a, b}, [an, bn](typename T::Node& self) {
    if (an->requires_grad) an->accumulate(self.grad);
    if (bn->requires_grad) bn->accumulate(-self.grad);
  });
}

template <class Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c) {
  using T = Tensor<Scalar>;
  auto an = a.node();
  return T::make_op(a.value() * c, {a}, [an, c](typename T::Node& self) {
    if (an->requires_grad) an->accumulate(self.grad * c);
  });
}

template <class Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  using T = Tensor<Scalar>;
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows)
      shape_error("concat_cols", rows, parts.front().cols(), p.rows(), p.cols());
    cols += p.cols();
  }
  Mat<Scalar> v(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    offsets.push_back(at);
    at += p.cols();
  }
  std::vector<std::shared_ptr<typename T::Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return T::make_op(std::move(v), parts, [nodes, offsets](typename T::Node& self) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i]->requires_grad)
        nodes[i]->accumulate(self.grad.middleCols(offsets[i], nodes[i]->value.cols()));
  });
}

template <class Scalar>
Tensor<Scalar> concat_cols(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return concat_cols<Scalar>({a, b});
}

template <class Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  using T = Tensor<Scalar>;
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols)
      shape_error("concat_rows", parts.front().rows(), cols, p.rows(), p.cols());
    rows += p.rows();
  }
  Mat<Scalar> v(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    offsets.push_back(at);
    at += p.rows();
  }
  std::vector<std::shared_ptr<typename T::Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return T::make_op(std::move(v), parts, [nodes, offsets](typename T::Node& self) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i]->requires_grad)
        nodes[i]->accumulate(self.grad.middleRows(offsets[i], nodes[i]->value.rows()));
  });
}

template <class Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  using T = Tensor<Scalar>;
  auto an = a.node();
  return T::make_op(a.value().middleCols(start, count), {a},
                    [an, start, count](typename T::Node& self) {
                      if (!an->requires_grad) return;
                      Mat<Scalar> g = Mat<Scalar>::Zero(an->value.rows(), an->value.cols());
                      g.middleCols(start, count) = self.grad;
                      an->accumulate(g);
                    });
}

template <class Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw std::invalid_argument("slice_rows: range out of bounds");
  using T = Tensor<Scalar>;
  auto an = a.node();
  return T::make_op(a.value().middleRows(start, count), {a},
                    [an, start, count](typename T::Node& self) {
                      if (!an->requires_grad) return;
                      Mat<Scalar> g = Mat<Scalar>::Zero(an->value.rows(), an->value.cols());
                      g.middleRows(start, count) = self.grad;
                      an->accumulate(g);
                    });
}

/// Row-wise softmax. Entries of -inf are legal and receive exactly zero
/// weight; a row whose entries are all -inf is an error.
template <class Scalar>
Tensor<Scalar> row_softmax(const Tensor<Scalar>& a) {
  using T = Tensor<Scalar>;
  Mat<Scalar> y(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const Scalar mx = a.value().row(r).maxCoeff();
    if (!(mx > -std::numeric_limits<Scalar>::infinity()))
      throw std::invalid_argument("row_softmax: row " + std::to_string(r) +
                                  " has no finite entries");
    y.row(r) = (a.value().row(r).array() - mx).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  auto an = a.node();
  return T::make_op(std::move(y), {a}, [an](typename T::Node& self) {
    if (!an->requires_grad) return;
    Mat<Scalar> g(self.value.rows(), self.value.cols());
    for (Eigen::Index r = 0; r < self.value.rows(); ++r) {
      const Scalar dot = self.grad.row(r).dot(self.value.row(r));
      g.row(r) =
          (self.value.row(r).array() * (self.grad.row(r).array() - dot)).matrix();
    }
    an->accumulate(g);
  });
}

/// Row-wise layer normalization with per-column affine parameters (1xN each).
template <class Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, Scalar eps = Scalar(1e-5)) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols())
    shape_error("layer_norm gamma", x.rows(), x.cols(), gamma.rows(), gamma.cols());
  if (beta.rows() != 1 || beta.cols() != x.cols())
    shape_error("layer_norm beta", x.rows(), x.cols(), beta.rows(), beta.cols());
  using T = Tensor<Scalar>;
  const Eigen::Index d = x.cols();
  Mat<Scalar> xhat(x.rows(), d);
  Mat<Scalar> inv_std(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mu = x.value().row(r).mean();
    const Scalar var = (x.value().row(r).array() - mu).square().sum() / Scalar(d);
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    inv_std(r, 0) = inv;
    xhat.row(r) = ((x.value().row(r).array() - mu) * inv).matrix();
  }
  Mat<Scalar> y = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  y.rowwise() += beta.value().row(0);
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return T::make_op(std::move(y), {x, gamma, beta},
                    [xn, gn, bn, xhat, inv_std, d](typename T::Node& self) {
                      if (bn->requires_grad) bn->accumulate(self.grad.colwise().sum());
                      if (gn->requires_grad)
                        gn->accumulate((self.grad.array() * xhat.array()).colwise().sum().matrix());
                      if (!xn->requires_grad) return;
                      Mat<Scalar> dx(xhat.rows(), static_cast<Eigen::Index>(d));
                      for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                        const Eigen::Array<Scalar, 1, Eigen::Dynamic> gx =
                            self.grad.row(r).array() * gn->value.row(0).array();
                        const Scalar mean_gx = gx.mean();
                        const Scalar mean_gx_xhat = (gx * xhat.row(r).array()).mean();
                        dx.row(r) = (inv_std(r, 0) *
                                     (gx - mean_gx - xhat.row(r).array() * mean_gx_xhat))
                                        .matrix();
                      }
                      xn->accumulate(dx);
                    });
}

/// GELU with the exact Gaussian CDF form, x * Phi(x).
template <class Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
  using T = Tensor<Scalar>;
  Mat<Scalar> phi =
      (Scalar(0.5) *
       ((x.value().array() * Scalar(M_SQRT1_2)).erf() + Scalar(1)))
          .matrix();
  Mat<Scalar> y = (x.value().array() * phi.array()).matrix();
  auto xn = x.node();
  return T::make_op(std::move(y), {x}, [xn, phi](typename T::Node& self) {
    if (!xn->requires_grad) return;
    const Scalar inv_sqrt_2pi = Scalar(1) / std::sqrt(Scalar(2) * Scalar(M_PI));
    auto pdf = (-Scalar(0.5) * xn->value.array().square()).exp() * inv_sqrt_2pi;
    xn->accumulate(
        (self.grad.array() * (phi.array() + xn->value.array() * pdf)).matrix());
  });
}

/// Replace entries where mask is true with `fill`; gradients flow only
/// through unmasked entries.
template <class Scalar>
Tensor<Scalar> masked_fill(const Tensor<Scalar>& x, const BoolArray& mask, Scalar fill) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols())
    shape_error("masked_fill", x.rows(), x.cols(), mask.rows(), mask.cols());
  using T = Tensor<Scalar>;
  Mat<Scalar> y = mask.select(Mat<Scalar>::Constant(x.rows(), x.cols(), fill), x.value());
  auto xn = x.node();
  return T::make_op(std::move(y), {x}, [xn, mask](typename T::Node& self) {
    if (!xn->requires_grad) return;
    xn->accumulate(
        mask.select(Mat<Scalar>::Zero(self.grad.rows(), self.grad.cols()), self.grad));
  });
}

template <class Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  using T = Tensor<Scalar>;
  Mat<Scalar> y(1, 1);
  y(0, 0) = x.value().mean();
  auto xn = x.node();
  return T::make_op(std::move(y), {x}, [xn](typename T::Node& self) {
    if (!xn->requires_grad) return;
    const Scalar g = self.grad(0, 0) / Scalar(xn->value.size());
    xn->accumulate(Mat<Scalar>::Constant(xn->value.rows(), xn->value.cols(), g));
  });
}

/// Mean squared error against a constant target, restricted to an optional
/// mask (mean over the selected entries only).
template <class Scalar>
Tensor<Scalar> mse_loss(const Tensor<Scalar>& pred, const Mat<Scalar>& target,
                        const BoolArray* mask = nullptr) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    shape_error("mse_loss", pred.rows(), pred.cols(), target.rows(), target.cols());
  using T = Tensor<Scalar>;
  Mat<Scalar> diff = pred.value() - target;
  Scalar count;
  if (mask) {
    if (mask->rows() != diff.rows() || mask->cols() != diff.cols())
      shape_error("mse_loss mask", diff.rows(), diff.cols(), mask->rows(), mask->cols());
    diff = mask->select(diff, Mat<Scalar>::Zero(diff.rows(), diff.cols()));
    count = Scalar(mask->count());
    if (count == Scalar(0)) throw std::invalid_argument("mse_loss: empty mask");
  } else {
    count = Scalar(diff.size());
  }
  Mat<Scalar> y(1, 1);
  y(0, 0) = diff.array().square().sum() / count;
  auto pn = pred.node();
  return T::make_op(std::move(y), {pred}, [pn, diff, count](typename T::Node& self) {
    if (!pn->requires_grad) return;
    pn->accumulate((Scalar(2) / count) * self.grad(0, 0) * diff);
  });
}

/// Rows of x re-indexed by idx (duplicates allowed); backward scatter-adds.
template <class Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& x, const std::vector<int>& idx) {
  using T = Tensor<Scalar>;
  Mat<Scalar> y(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= x.rows())
      throw std::invalid_argument("gather_rows: index out of range");
    y.row(static_cast<Eigen::Index>(r)) = x.value().row(idx[r]);
  }
  auto xn = x.node();
  return T::make_op(std::move(y), {x}, [xn, idx](typename T::Node& self) {
    if (!xn->requires_grad) return;
    Mat<Scalar> g = Mat<Scalar>::Zero(xn->value.rows(), xn->value.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      g.row(idx[r]) += self.grad.row(static_cast<Eigen::Index>(r));
    xn->accumulate(g);
  });
}

/// Sum rows of x into n_out buckets selected by idx; backward gathers.
template <class Scalar>
Tensor<Scalar> scatter_sum_rows(const Tensor<Scalar>& x, const std::vector<int>& idx,
                                Eigen::Index n_out) {
  if (static_cast<Eigen::Index>(idx.size()) != x.rows())
    throw std::invalid_argument("scatter_sum_rows: one index per row required");
  using T = Tensor<Scalar>;
  Mat<Scalar> y = Mat<Scalar>::Zero(n_out, x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= n_out)
      throw std::invalid_argument("scatter_sum_rows: index out of range");
    y.row(idx[r]) += x.value().row(static_cast<Eigen::Index>(r));
  }
  auto xn = x.node();
  return T::make_op(std::move(y), {x}, [xn, idx](typename T::Node& self) {
    if (!xn->requires_grad) return;
    Mat<Scalar> g(xn->value.rows(), xn->value.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      g.row(static_cast<Eigen::Index>(r)) = self.grad.row(idx[r]);
    xn->accumulate(g);
  });
}

template <class Scalar>
Tensor<Scalar> mean_rows(const Tensor<Scalar>& x) {
  if (x.rows() == 0) throw std::invalid_argument("mean_rows: empty input");
  using T = Tensor<Scalar>;
  Mat<Scalar> y = x.value().colwise().mean();
  auto xn = x.node();
  return T::make_op(std::move(y), {x}, [xn](typename T::Node& self) {
    if (!xn->requires_grad) return;
    xn->accumulate((Mat<Scalar>::Ones(xn->value.rows(), 1) * self.grad) /
                   Scalar(xn->value.rows()));
  });
}

template <class Scalar>
Tensor<Scalar> broadcast_row(const Tensor<Scalar>& x, Eigen::Index n_rows) {
  if (x.rows() != 1) throw std::invalid_argument("broadcast_row: input must be 1xN");
  using T = Tensor<Scalar>;
  Mat<Scalar> y = x.value().replicate(n_rows, 1);
  auto xn = x.node();
  return T::make_op(std::move(y), {x}, [xn](typename T::Node& self) {
    if (!xn->requires_grad) return;
    xn->accumulate(self.grad.colwise().sum());
  });
}

// ---------------------------------------------------------------------------

/// Compare reverse-mode gradients of a scalar-valued function against central
/// finite differences. Returns the largest relative error, with the
/// denominator floored at 1 so near-zero gradients are compared absolutely.
template <class Scalar>
double grad_check(const std::function<Tensor<Scalar>()>& f, std::vector<Tensor<Scalar>> params,
                  double eps = 1e-5) {
  for (auto& p : params) p.zero_grad();
  Tensor<Scalar> out = f();
  out.backward();
  std::vector<Mat<Scalar>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params)
    analytic.push_back(p.has_grad() ? p.grad()
                                    : Mat<Scalar>::Zero(p.rows(), p.cols()));

  double max_err = 0.0;
  NoGradGuard ng;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Mat<Scalar>& v = params[pi].value_mut();
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      for (Eigen::Index j = 0; j < v.cols(); ++j) {
        const Scalar saved = v(i, j);
        v(i, j) = saved + Scalar(eps);
        const double up = static_cast<double>(f().value()(0, 0));
        v(i, j) = saved - Scalar(eps);
        const double down = static_cast<double>(f().value()(0, 0));
        v(i, j) = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double exact = static_cast<double>(analytic[pi](i, j));
        const double denom = std::max({1.0, std::abs(numeric), std::abs(exact)});
        max_err = std::max(max_err, std::abs(numeric - exact) / denom);
      }
    }
  }
  return max_err;
}

}  // namespace wakeforge::ad
