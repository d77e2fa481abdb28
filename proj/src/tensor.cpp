#include "hypervae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace hypervae {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int e : s) {
    if (e <= 0) throw std::invalid_argument("tensor shape extent must be positive, got " + shape_str(s));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

NodePtr make_node(Shape shape, const char* op, std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data.assign(shape_numel(n->shape), 0.0);
  n->op = op;
  for (auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[static_cast<std::size_t>(i)] =
        st[static_cast<std::size_t>(i) + 1] * static_cast<std::size_t>(s[static_cast<std::size_t>(i) + 1]);
  return st;
}

// Broadcast layout: for each axis of the output, the source stride (0 where
// the source extent is 1).
struct BroadcastMap {
  Shape out_shape;
  std::vector<std::size_t> a_stride;
  std::vector<std::size_t> b_stride;
};

BroadcastMap broadcast_shapes(const char* op, const Shape& a, const Shape& b) {
  const std::size_t ra = a.size(), rb = b.size();
  const std::size_t r = std::max(ra, rb);
  BroadcastMap m;
  m.out_shape.assign(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const int ea = i < r - ra ? 1 : a[i - (r - ra)];
    const int eb = i < r - rb ? 1 : b[i - (r - rb)];
    if (ea != eb && ea != 1 && eb != 1) shape_error(op, a, b);
    m.out_shape[i] = std::max(ea, eb);
  }
  const auto sa = row_major_strides(a);
  const auto sb = row_major_strides(b);
  m.a_stride.assign(r, 0);
  m.b_stride.assign(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    if (i >= r - ra && a[i - (r - ra)] != 1) m.a_stride[i] = sa[i - (r - ra)];
    if (i >= r - rb && b[i - (r - rb)] != 1) m.b_stride[i] = sb[i - (r - rb)];
  }
  return m;
}

// Walks the output index space of a broadcast op, producing flat offsets into
// both operands. fn(out_idx, a_idx, b_idx).
template <typename F>
void for_each_broadcast(const BroadcastMap& m, F&& fn) {
  const std::size_t n = shape_numel(m.out_shape);
  const std::size_t r = m.out_shape.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    fn(o, ia, ib);
    // increment the odometer
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += m.a_stride[d];
      ib += m.b_stride[d];
      if (idx[d] < static_cast<std::size_t>(m.out_shape[d])) break;
      ia -= m.a_stride[d] * idx[d];
      ib -= m.b_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul, Div };

Tensor binary_op(const char* name, BinOp kind, const Tensor& A, const Tensor& B) {
  const auto& a = *A.node();
  const auto& b = *B.node();
  auto apply = [kind](double x, double y) {
    switch (kind) {
      case BinOp::Add: return x + y;
      case BinOp::Sub: return x - y;
      case BinOp::Mul: return x * y;
      case BinOp::Div: return x / y;
    }
    return 0.0;
  };
  NodePtr out;
  if (a.shape == b.shape) {
    out = make_node(a.shape, name, {A.node(), B.node()});
    const std::size_t n = a.data.size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = apply(a.data[i], b.data[i]);
    if (out->requires_grad) {
      NodePtr pa = A.node(), pb = B.node();
      out->backward_fn = [pa, pb, kind](Node& self) {
        const std::size_t n = self.data.size();
        if (pa->requires_grad) {
          pa->ensure_grad();
          switch (kind) {
            case BinOp::Add:
            case BinOp::Sub:
              for (std::size_t i = 0; i < n; ++i) pa->grad[i] += self.grad[i];
              break;
            case BinOp::Mul:
              for (std::size_t i = 0; i < n; ++i) pa->grad[i] += self.grad[i] * pb->data[i];
              break;
            case BinOp::Div:
              for (std::size_t i = 0; i < n; ++i) pa->grad[i] += self.grad[i] / pb->data[i];
              break;
          }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          switch (kind) {
            case BinOp::Add:
              for (std::size_t i = 0; i < n; ++i) pb->grad[i] += self.grad[i];
              break;
            case BinOp::Sub:
              for (std::size_t i = 0; i < n; ++i) pb->grad[i] -= self.grad[i];
              break;
            case BinOp::Mul:
              for (std::size_t i = 0; i < n; ++i) pb->grad[i] += self.grad[i] * pa->data[i];
              break;
            case BinOp::Div:
              for (std::size_t i = 0; i < n; ++i)
                pb->grad[i] -= self.grad[i] * pa->data[i] / (pb->data[i] * pb->data[i]);
              break;
          }
        }
      };
    }
    return Tensor(out);
  }
  // broadcasting path
  BroadcastMap m = broadcast_shapes(name, a.shape, b.shape);
  out = make_node(m.out_shape, name, {A.node(), B.node()});
  auto* od = out->data.data();
  const auto* ad = a.data.data();
  const auto* bd = b.data.data();
  for_each_broadcast(m, [&](std::size_t o, std::size_t ia, std::size_t ib) { od[o] = apply(ad[ia], bd[ib]); });
  if (out->requires_grad) {
    NodePtr pa = A.node(), pb = B.node();
    out->backward_fn = [pa, pb, kind, m](Node& self) {
      if (pa->requires_grad) pa->ensure_grad();
      if (pb->requires_grad) pb->ensure_grad();
      const auto* ad = pa->data.data();
      const auto* bd = pb->data.data();
      for_each_broadcast(m, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        const double g = self.grad[o];
        switch (kind) {
          case BinOp::Add:
            if (pa->requires_grad) pa->grad[ia] += g;
            if (pb->requires_grad) pb->grad[ib] += g;
            break;
          case BinOp::Sub:
            if (pa->requires_grad) pa->grad[ia] += g;
            if (pb->requires_grad) pb->grad[ib] -= g;
            break;
          case BinOp::Mul:
            if (pa->requires_grad) pa->grad[ia] += g * bd[ib];
            if (pb->requires_grad) pb->grad[ib] += g * ad[ia];
            break;
          case BinOp::Div:
            if (pa->requires_grad) pa->grad[ia] += g / bd[ib];
            if (pb->requires_grad) pb->grad[ib] -= g * ad[ia] / (bd[ib] * bd[ib]);
            break;
        }
      });
    };
  }
  return Tensor(out);
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& X, Fwd fwd, Bwd bwd_factor_from_xy) {
  const auto& x = *X.node();
  NodePtr out = make_node(x.shape, name, {X.node()});
  const std::size_t n = x.data.size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = fwd(x.data[i]);
  if (out->requires_grad) {
    NodePtr px = X.node();
    out->backward_fn = [px, bwd_factor_from_xy](Node& self) {
      px->ensure_grad();
      const std::size_t n = self.data.size();
      for (std::size_t i = 0; i < n; ++i) px->grad[i] += self.grad[i] * bwd_factor_from_xy(px->data[i], self.data[i]);
    };
  }
  return Tensor(out);
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  if (data.size() != n)
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                                shape_str(shape));
  n_ = std::make_shared<Node>();
  n_->shape = std::move(shape);
  n_->data = std::move(data);
  n_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(std::move(shape), std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  return Tensor(std::move(shape), std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> d(shape_numel(shape));
  for (auto& v : d) v = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::runtime_error("tensor has no gradient (backward not run or not requires_grad)");
  return n_->grad;
}

double Tensor::value() const {
  if (numel() != 1) throw std::runtime_error("value() requires a single-element tensor, shape " + shape_str(shape()));
  return n_->data[0];
}

Tensor Tensor::detach() const { return Tensor(n_->shape, n_->data, false); }

void Tensor::backward() const {
  if (numel() != 1)
    throw std::runtime_error("backward() requires a scalar loss, got shape " + shape_str(shape()));
  if (!n_->requires_grad) throw std::runtime_error("backward() on a tensor that does not require gradients");

  // iterative post-order DFS; each node enters the order exactly once
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(n_.get(), 0);
  visited.insert(n_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next].get();
      ++next;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  n_->ensure_grad();
  n_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
}

Tensor Tensor::add(const Tensor& o) const { return binary_op("add", BinOp::Add, *this, o); }
Tensor Tensor::sub(const Tensor& o) const { return binary_op("sub", BinOp::Sub, *this, o); }
Tensor Tensor::mul(const Tensor& o) const { return binary_op("mul", BinOp::Mul, *this, o); }
Tensor Tensor::div(const Tensor& o) const { return binary_op("div", BinOp::Div, *this, o); }

Tensor Tensor::add_scalar(double v) const {
  return unary_op("add_scalar", *this, [v](double x) { return x + v; }, [](double, double) { return 1.0; });
}

Tensor Tensor::mul_scalar(double v) const {
  return unary_op("mul_scalar", *this, [v](double x) { return x * v; }, [v](double, double) { return v; });
}

Tensor Tensor::relu() const {
  return unary_op("relu", *this, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor Tensor::tanh_() const {
  return unary_op("tanh", *this, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor Tensor::sigmoid() const {
  return unary_op("sigmoid", *this, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor Tensor::exp_() const {
  return unary_op("exp", *this, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor Tensor::log_() const {
  return unary_op("log", *this, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor Tensor::sqrt_() const {
  return unary_op("sqrt", *this, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}

Tensor Tensor::clamp(double lo, double hi) const {
  return unary_op("clamp", *this, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                  [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor Tensor::matmul(const Tensor& o) const {
  const auto& a = *n_;
  const auto& b = *o.node();
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) shape_error("matmul", a.shape, b.shape);
  const int M = a.shape[0], K = a.shape[1], N = b.shape[1];
  NodePtr out = make_node({M, N}, "matmul", {n_, o.node()});
  {
    const double* A = a.data.data();
    const double* B = b.data.data();
    double* C = out->data.data();
    for (int i = 0; i < M; ++i) {
      double* c = C + static_cast<std::size_t>(i) * N;
      const double* arow = A + static_cast<std::size_t>(i) * K;
      for (int k = 0; k < K; ++k) {
        const double av = arow[k];
        if (av == 0.0) continue;
        const double* brow = B + static_cast<std::size_t>(k) * N;
        for (int j = 0; j < N; ++j) c[j] += av * brow[j];
      }
    }
  }
  if (out->requires_grad) {
    NodePtr pa = n_, pb = o.node();
    out->backward_fn = [pa, pb, M, K, N](Node& self) {
      const double* G = self.grad.data();
      if (pa->requires_grad) {
        pa->ensure_grad();
        // dA = G * B^T
        const double* B = pb->data.data();
        double* dA = pa->grad.data();
        for (int i = 0; i < M; ++i) {
          const double* grow = G + static_cast<std::size_t>(i) * N;
          double* darow = dA + static_cast<std::size_t>(i) * K;
          for (int k = 0; k < K; ++k) {
            const double* brow = B + static_cast<std::size_t>(k) * N;
            double s = 0.0;
            for (int j = 0; j < N; ++j) s += grow[j] * brow[j];
            darow[k] += s;
          }
        }
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        // dB = A^T * G
        const double* A = pa->data.data();
        double* dB = pb->grad.data();
        for (int i = 0; i < M; ++i) {
          const double* arow = A + static_cast<std::size_t>(i) * K;
          const double* grow = G + static_cast<std::size_t>(i) * N;
          for (int k = 0; k < K; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            double* dbrow = dB + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) dbrow[j] += av * grow[j];
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor Tensor::rowwise_linear(const Tensor& X, const Tensor& W, const Tensor& B, int in, int out_dim) {
  const auto& x = *X.node();
  const auto& w = *W.node();
  const auto& b = *B.node();
  if (x.shape.size() != 2 || x.shape[1] != in) shape_error("rowwise_linear(x)", x.shape, {in});
  const int N = x.shape[0];
  if (w.shape.size() != 2 || w.shape[0] != N || w.shape[1] != in * out_dim)
    shape_error("rowwise_linear(w)", w.shape, {N, in * out_dim});
  if (b.shape.size() != 2 || b.shape[0] != N || b.shape[1] != out_dim)
    shape_error("rowwise_linear(b)", b.shape, {N, out_dim});
  NodePtr out = make_node({N, out_dim}, "rowwise_linear", {X.node(), W.node(), B.node()});
  for (int n = 0; n < N; ++n) {
    const double* xr = x.data.data() + static_cast<std::size_t>(n) * in;
    const double* wr = w.data.data() + static_cast<std::size_t>(n) * in * out_dim;
    const double* br = b.data.data() + static_cast<std::size_t>(n) * out_dim;
    double* yr = out->data.data() + static_cast<std::size_t>(n) * out_dim;
    for (int o = 0; o < out_dim; ++o) yr[o] = br[o];
    for (int i = 0; i < in; ++i) {
      const double xv = xr[i];
      if (xv == 0.0) continue;
      const double* wrow = wr + static_cast<std::size_t>(i) * out_dim;
      for (int o = 0; o < out_dim; ++o) yr[o] += xv * wrow[o];
    }
  }
  if (out->requires_grad) {
    NodePtr px = X.node(), pw = W.node(), pb = B.node();
    out->backward_fn = [px, pw, pb, N, in, out_dim](Node& self) {
      if (px->requires_grad) px->ensure_grad();
      if (pw->requires_grad) pw->ensure_grad();
      if (pb->requires_grad) pb->ensure_grad();
      for (int n = 0; n < N; ++n) {
        const double* gr = self.grad.data() + static_cast<std::size_t>(n) * out_dim;
        const double* xr = px->data.data() + static_cast<std::size_t>(n) * in;
        const double* wr = pw->data.data() + static_cast<std::size_t>(n) * in * out_dim;
        if (pb->requires_grad) {
          double* dbr = pb->grad.data() + static_cast<std::size_t>(n) * out_dim;
          for (int o = 0; o < out_dim; ++o) dbr[o] += gr[o];
        }
        if (px->requires_grad) {
          double* dxr = px->grad.data() + static_cast<std::size_t>(n) * in;
          for (int i = 0; i < in; ++i) {
            const double* wrow = wr + static_cast<std::size_t>(i) * out_dim;
            double s = 0.0;
            for (int o = 0; o < out_dim; ++o) s += gr[o] * wrow[o];
            dxr[i] += s;
          }
        }
        if (pw->requires_grad) {
          double* dwr = pw->grad.data() + static_cast<std::size_t>(n) * in * out_dim;
          for (int i = 0; i < in; ++i) {
            const double xv = xr[i];
            if (xv == 0.0) continue;
            double* dwrow = dwr + static_cast<std::size_t>(i) * out_dim;
            for (int o = 0; o < out_dim; ++o) dwrow[o] += xv * gr[o];
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor Tensor::sum() const {
  NodePtr out = make_node({1}, "sum", {n_});
  double s = 0.0;
  for (double v : n_->data) s += v;
  out->data[0] = s;
  if (out->requires_grad) {
    NodePtr p = n_;
    out->backward_fn = [p](Node& self) {
      p->ensure_grad();
      const double g = self.grad[0];
      for (auto& gv : p->grad) gv += g;
    };
  }
  return Tensor(out);
}

Tensor Tensor::mean() const { return sum().mul_scalar(1.0 / static_cast<double>(numel())); }

Tensor Tensor::sum_axes(const std::vector<int>& axes, bool keepdims) const {
  const auto& x = *n_;
  const std::size_t r = x.shape.size();
  std::vector<bool> reduce(r, false);
  for (int a : axes) {
    if (a < 0 || static_cast<std::size_t>(a) >= r)
      throw std::invalid_argument("sum_axes: axis " + std::to_string(a) + " out of range for " + shape_str(x.shape));
    reduce[static_cast<std::size_t>(a)] = true;
  }
  Shape kept_shape(r);
  for (std::size_t i = 0; i < r; ++i) kept_shape[i] = reduce[i] ? 1 : x.shape[i];
  // map each input element to its output slot via kept strides
  const auto in_strides = row_major_strides(x.shape);
  const auto out_strides = row_major_strides(kept_shape);
  NodePtr out = make_node(kept_shape, "sum_axes", {n_});
  const std::size_t n = x.data.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t oidx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out->data[oidx] += x.data[i];
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      if (!reduce[d]) oidx += out_strides[d];
      if (idx[d] < static_cast<std::size_t>(x.shape[d])) break;
      if (!reduce[d]) oidx -= out_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  if (out->requires_grad) {
    NodePtr p = n_;
    Shape xshape = x.shape;
    std::vector<bool> red = reduce;
    auto ostr = out_strides;
    out->backward_fn = [p, xshape, red, ostr](Node& self) {
      p->ensure_grad();
      const std::size_t r = xshape.size();
      const std::size_t n = p->data.size();
      std::vector<std::size_t> idx(r, 0);
      std::size_t oidx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        p->grad[i] += self.grad[oidx];
        for (std::size_t d = r; d-- > 0;) {
          ++idx[d];
          if (!red[d]) oidx += ostr[d];
          if (idx[d] < static_cast<std::size_t>(xshape[d])) break;
          if (!red[d]) oidx -= ostr[d] * idx[d];
          idx[d] = 0;
        }
      }
    };
  }
  Tensor res(out);
  if (!keepdims) {
    Shape squeezed;
    for (std::size_t i = 0; i < r; ++i)
      if (!reduce[i]) squeezed.push_back(x.shape[i]);
    if (squeezed.empty()) squeezed.push_back(1);
    res = res.reshape(squeezed);
  }
  return res;
}

Tensor Tensor::mean_axes(const std::vector<int>& axes, bool keepdims) const {
  std::size_t count = 1;
  for (int a : axes) count *= static_cast<std::size_t>(n_->shape[static_cast<std::size_t>(a)]);
  return sum_axes(axes, keepdims).mul_scalar(1.0 / static_cast<double>(count));
}

Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(shape()) + " as " + shape_str(new_shape));
  NodePtr out = make_node(new_shape, "reshape", {n_});
  out->data = n_->data;
  if (out->requires_grad) {
    NodePtr p = n_;
    out->backward_fn = [p](Node& self) {
      p->ensure_grad();
      const std::size_t n = self.grad.size();
      for (std::size_t i = 0; i < n; ++i) p->grad[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor Tensor::slice(int axis, int start, int len) const {
  const auto& x = *n_;
  const std::size_t r = x.shape.size();
  if (axis < 0 || static_cast<std::size_t>(axis) >= r)
    throw std::invalid_argument("slice: axis out of range for " + shape_str(x.shape));
  if (start < 0 || len <= 0 || start + len > x.shape[static_cast<std::size_t>(axis)])
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                ") out of bounds for " + shape_str(x.shape));
  Shape out_shape = x.shape;
  out_shape[static_cast<std::size_t>(axis)] = len;
  // outer = product of dims before axis, inner = product after
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < static_cast<std::size_t>(axis); ++i) outer *= static_cast<std::size_t>(x.shape[i]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < r; ++i) inner *= static_cast<std::size_t>(x.shape[i]);
  const std::size_t in_axis = static_cast<std::size_t>(x.shape[static_cast<std::size_t>(axis)]);
  NodePtr out = make_node(out_shape, "slice", {n_});
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = x.data.data() + (o * in_axis + static_cast<std::size_t>(start)) * inner;
    double* dst = out->data.data() + o * static_cast<std::size_t>(len) * inner;
    std::copy(src, src + static_cast<std::size_t>(len) * inner, dst);
  }
  if (out->requires_grad) {
    NodePtr p = n_;
    const std::size_t st = static_cast<std::size_t>(start), ln = static_cast<std::size_t>(len);
    out->backward_fn = [p, outer, inner, in_axis, st, ln](Node& self) {
      p->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* g = self.grad.data() + o * ln * inner;
        double* dst = p->grad.data() + (o * in_axis + st) * inner;
        for (std::size_t i = 0; i < ln * inner; ++i) dst[i] += g[i];
      }
    };
  }
  return Tensor(out);
}

Tensor Tensor::concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input list");
  const Shape& first = parts[0].shape();
  const std::size_t r = first.size();
  if (axis < 0 || static_cast<std::size_t>(axis) >= r)
    throw std::invalid_argument("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  int total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != r) shape_error("concat", first, s);
    for (std::size_t i = 0; i < r; ++i)
      if (i != static_cast<std::size_t>(axis) && s[i] != first[i]) shape_error("concat", first, s);
    total += s[static_cast<std::size_t>(axis)];
  }
  out_shape[static_cast<std::size_t>(axis)] = total;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < static_cast<std::size_t>(axis); ++i) outer *= static_cast<std::size_t>(first[i]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < r; ++i) inner *= static_cast<std::size_t>(first[i]);
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  for (const auto& p : parts) parents.push_back(p.node());
  NodePtr out = make_node(out_shape, "concat", parents);
  std::vector<std::size_t> axis_sizes;
  for (const auto& p : parts) axis_sizes.push_back(static_cast<std::size_t>(p.shape()[static_cast<std::size_t>(axis)]));
  const std::size_t out_axis = static_cast<std::size_t>(total);
  std::size_t off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& src = parts[pi].data();
    for (std::size_t o = 0; o < outer; ++o) {
      const double* s = src.data() + o * axis_sizes[pi] * inner;
      double* d = out->data.data() + (o * out_axis + off) * inner;
      std::copy(s, s + axis_sizes[pi] * inner, d);
    }
    off += axis_sizes[pi];
  }
  if (out->requires_grad) {
    out->backward_fn = [outer, inner, out_axis, axis_sizes](Node& self) {
      std::size_t off = 0;
      for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
        Node* p = self.parents[pi].get();
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* g = self.grad.data() + (o * out_axis + off) * inner;
            double* dst = p->grad.data() + o * axis_sizes[pi] * inner;
            for (std::size_t i = 0; i < axis_sizes[pi] * inner; ++i) dst[i] += g[i];
          }
        }
        off += axis_sizes[pi];
      }
    };
  }
  return Tensor(out);
}

Tensor Tensor::repeat_rows(int r) const {
  const auto& x = *n_;
  if (x.shape.size() != 2) throw std::invalid_argument("repeat_rows: expects rank-2, got " + shape_str(x.shape));
  const int N = x.shape[0], F = x.shape[1];
  NodePtr out = make_node({N * r, F}, "repeat_rows", {n_});
  for (int n = 0; n < N; ++n) {
    const double* src = x.data.data() + static_cast<std::size_t>(n) * F;
    for (int j = 0; j < r; ++j) {
      double* dst = out->data.data() + (static_cast<std::size_t>(n) * r + j) * F;
      std::copy(src, src + F, dst);
    }
  }
  if (out->requires_grad) {
    NodePtr p = n_;
    out->backward_fn = [p, N, F, r](Node& self) {
      p->ensure_grad();
      for (int n = 0; n < N; ++n) {
        double* dst = p->grad.data() + static_cast<std::size_t>(n) * F;
        for (int j = 0; j < r; ++j) {
          const double* g = self.grad.data() + (static_cast<std::size_t>(n) * r + j) * F;
          for (int f = 0; f < F; ++f) dst[f] += g[f];
        }
      }
    };
  }
  return Tensor(out);
}

Tensor Tensor::tile_cols(int m) const {
  const auto& x = *n_;
  if (x.shape.size() != 2) throw std::invalid_argument("tile_cols: expects rank-2, got " + shape_str(x.shape));
  const int N = x.shape[0], F = x.shape[1];
  NodePtr out = make_node({N, m * F}, "tile_cols", {n_});
  for (int n = 0; n < N; ++n) {
    const double* src = x.data.data() + static_cast<std::size_t>(n) * F;
    double* dst = out->data.data() + static_cast<std::size_t>(n) * m * F;
    for (int j = 0; j < m; ++j) std::copy(src, src + F, dst + static_cast<std::size_t>(j) * F);
  }
  if (out->requires_grad) {
    NodePtr p = n_;
    out->backward_fn = [p, N, F, m](Node& self) {
      p->ensure_grad();
      for (int n = 0; n < N; ++n) {
        double* dst = p->grad.data() + static_cast<std::size_t>(n) * F;
        const double* g = self.grad.data() + static_cast<std::size_t>(n) * m * F;
        for (int j = 0; j < m; ++j)
          for (int f = 0; f < F; ++f) dst[f] += g[static_cast<std::size_t>(j) * F + f];
      }
    };
  }
  return Tensor(out);
}

Tensor Tensor::softmax() const {
  const auto& x = *n_;
  if (x.shape.empty()) throw std::invalid_argument("softmax: undefined for empty shape");
  const int C = x.shape.back();
  const std::size_t rows = x.data.size() / static_cast<std::size_t>(C);
  NodePtr out = make_node(x.shape, "softmax", {n_});
  for (std::size_t rix = 0; rix < rows; ++rix) {
    const double* in = x.data.data() + rix * C;
    double* o = out->data.data() + rix * C;
    double mx = in[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, in[c]);
    double s = 0.0;
    for (int c = 0; c < C; ++c) {
      o[c] = std::exp(in[c] - mx);
      s += o[c];
    }
    for (int c = 0; c < C; ++c) o[c] /= s;
  }
  if (out->requires_grad) {
    NodePtr p = n_;
    out->backward_fn = [p, C, rows](Node& self) {
      p->ensure_grad();
      for (std::size_t rix = 0; rix < rows; ++rix) {
        const double* y = self.data.data() + rix * C;
        const double* g = self.grad.data() + rix * C;
        double* dx = p->grad.data() + rix * C;
        double dot = 0.0;
        for (int c = 0; c < C; ++c) dot += g[c] * y[c];
        for (int c = 0; c < C; ++c) dx[c] += y[c] * (g[c] - dot);
      }
    };
  }
  return Tensor(out);
}

Tensor Tensor::logsumexp() const {
  const auto& x = *n_;
  const int C = x.shape.back();
  const std::size_t rows = x.data.size() / static_cast<std::size_t>(C);
  // The row max is a constant shift; logsumexp is exactly invariant to it,
  // so it carries no gradient of its own.
  Shape mshape = x.shape;
  mshape.back() = 1;
  std::vector<double> mx(rows);
  for (std::size_t rix = 0; rix < rows; ++rix) {
    const double* in = x.data.data() + rix * C;
    double m = in[0];
    for (int c = 1; c < C; ++c) m = std::max(m, in[c]);
    mx[rix] = m;
  }
  Tensor shift(mshape, mx, false);
  Tensor shifted = sub(shift);                       // broadcast over last axis
  Tensor s = shifted.exp_().sum_axes({rank() - 1}, true);
  return s.log_().add(shift);
}

Tensor Tensor::conv2d(const Tensor& kernel, int stride, int pad) const {
  const auto& x = *n_;
  const auto& k = *kernel.node();
  if (x.shape.size() != 4 || k.shape.size() != 4 || x.shape[1] != k.shape[1])
    shape_error("conv2d", x.shape, k.shape);
  const int N = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int Co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) shape_error("conv2d", x.shape, k.shape);
  NodePtr out = make_node({N, Co, Ho, Wo}, "conv2d", {n_, kernel.node()});
  const double* X = x.data.data();
  const double* K = k.data.data();
  double* Y = out->data.data();
  auto xoff = [&](int n, int c, int h, int w) {
    return ((static_cast<std::size_t>(n) * Ci + c) * H + h) * W + w;
  };
  auto yoff = [&](int n, int c, int h, int w) {
    return ((static_cast<std::size_t>(n) * Co + c) * Ho + h) * Wo + w;
  };
  auto koff = [&](int co, int ci, int i, int j) {
    return ((static_cast<std::size_t>(co) * Ci + ci) * kh + i) * kw + j;
  };
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Co; ++co)
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          double acc = 0.0;
          const int h0 = ho * stride - pad, w0 = wo * stride - pad;
          for (int ci = 0; ci < Ci; ++ci)
            for (int i = 0; i < kh; ++i) {
              const int h = h0 + i;
              if (h < 0 || h >= H) continue;
              const double* xr = X + xoff(n, ci, h, 0);
              const double* kr = K + koff(co, ci, i, 0);
              for (int j = 0; j < kw; ++j) {
                const int w = w0 + j;
                if (w < 0 || w >= W) continue;
                acc += xr[w] * kr[j];
              }
            }
          Y[yoff(n, co, ho, wo)] = acc;
        }
  if (out->requires_grad) {
    NodePtr px = n_, pk = kernel.node();
    out->backward_fn = [px, pk, N, Ci, H, W, Co, kh, kw, Ho, Wo, stride, pad](Node& self) {
      const double* G = self.grad.data();
      auto xoff = [&](int n, int c, int h, int w) {
        return ((static_cast<std::size_t>(n) * Ci + c) * H + h) * W + w;
      };
      auto yoff = [&](int n, int c, int h, int w) {
        return ((static_cast<std::size_t>(n) * Co + c) * Ho + h) * Wo + w;
      };
      auto koff = [&](int co, int ci, int i, int j) {
        return ((static_cast<std::size_t>(co) * Ci + ci) * kh + i) * kw + j;
      };
      if (px->requires_grad) px->ensure_grad();
      if (pk->requires_grad) pk->ensure_grad();
      const double* X = px->data.data();
      const double* K = pk->data.data();
      double* dX = px->requires_grad ? px->grad.data() : nullptr;
      double* dK = pk->requires_grad ? pk->grad.data() : nullptr;
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
          for (int ho = 0; ho < Ho; ++ho)
            for (int wo = 0; wo < Wo; ++wo) {
              const double g = G[yoff(n, co, ho, wo)];
              if (g == 0.0) continue;
              const int h0 = ho * stride - pad, w0 = wo * stride - pad;
              for (int ci = 0; ci < Ci; ++ci)
                for (int i = 0; i < kh; ++i) {
                  const int h = h0 + i;
                  if (h < 0 || h >= H) continue;
                  for (int j = 0; j < kw; ++j) {
                    const int w = w0 + j;
                    if (w < 0 || w >= W) continue;
                    if (dX) dX[xoff(n, ci, h, w)] += g * K[koff(co, ci, i, j)];
                    if (dK) dK[koff(co, ci, i, j)] += g * X[xoff(n, ci, h, w)];
                  }
                }
            }
    };
  }
  return Tensor(out);
}

Tensor Tensor::maxpool2d(int k, int stride) const {
  const auto& x = *n_;
  if (x.shape.size() != 4) throw std::invalid_argument("maxpool2d: expects NCHW, got " + shape_str(x.shape));
  const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int Ho = (H - k) / stride + 1;
  const int Wo = (W - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("maxpool2d: window larger than input " + shape_str(x.shape));
  NodePtr out = make_node({N, C, Ho, Wo}, "maxpool2d", {n_});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out->data.size());
  const double* X = x.data.data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t plane = (static_cast<std::size_t>(n) * C + c) * H * W;
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          double best = -1e300;
          std::size_t bidx = 0;
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
              const std::size_t idx = plane + static_cast<std::size_t>(ho * stride + i) * W + (wo * stride + j);
              if (X[idx] > best) {
                best = X[idx];
                bidx = idx;
              }
            }
          const std::size_t o =
              ((static_cast<std::size_t>(n) * C + c) * Ho + ho) * Wo + wo;
          out->data[o] = best;
          (*argmax)[o] = bidx;
        }
    }
  if (out->requires_grad) {
    NodePtr p = n_;
    out->backward_fn = [p, argmax](Node& self) {
      p->ensure_grad();
      const std::size_t n = self.grad.size();
      for (std::size_t o = 0; o < n; ++o) p->grad[(*argmax)[o]] += self.grad[o];
    };
  }
  return Tensor(out);
}

}  // namespace hypervae
