#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "hypervae/rng.hpp"

namespace hypervae {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // sized lazily, same length as data
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // distributes node.grad to parents
  const char* op = "leaf";

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense n-dimensional array of 64-bit reals participating in a tape-based
// reverse-mode gradient graph. Tensor is a cheap shared handle; the graph is
// rebuilt on every forward pass and torn down when the handles go away.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  std::size_t numel() const { return n_->data.size(); }
  int dim(int axis) const { return n_->shape[static_cast<std::size_t>(axis)]; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  bool requires_grad() const { return n_->requires_grad; }

  const std::vector<double>& data() const { return n_->data; }
  std::vector<double>& mutable_data() { return n_->data; }
  const std::vector<double>& grad() const;
  bool has_grad() const { return n_->grad.size() == n_->data.size(); }
  void zero_grad() { n_->grad.assign(n_->data.size(), 0.0); }

  double value() const;  // single-element tensors only
  double at(std::size_t flat) const { return n_->data[flat]; }

  // Constant copy detached from the graph.
  Tensor detach() const;

  // Reverse-mode pass from a single-element tensor. Gradients of every
  // reachable requires_grad tensor are accumulated additively.
  void backward() const;

  // --- elementwise (numpy-style right-aligned broadcasting) ---
  Tensor add(const Tensor& o) const;
  Tensor sub(const Tensor& o) const;
  Tensor mul(const Tensor& o) const;
  Tensor div(const Tensor& o) const;
  Tensor add_scalar(double v) const;
  Tensor mul_scalar(double v) const;
  Tensor neg() const { return mul_scalar(-1.0); }

  // --- unary ---
  Tensor relu() const;
  Tensor tanh_() const;
  Tensor sigmoid() const;
  Tensor exp_() const;
  Tensor log_() const;
  Tensor sqrt_() const;
  Tensor square() const { return mul(*this); }
  Tensor clamp(double lo, double hi) const;

  // --- linear algebra ---
  Tensor matmul(const Tensor& o) const;  // [M,K] x [K,N]
  // y[n,:] = x[n,:] @ W_n + b_n with W_n = w.row(n) reshaped to [in,out]
  // (row-major). The workhorse of per-example generated weights.
  static Tensor rowwise_linear(const Tensor& x, const Tensor& w, const Tensor& b, int in, int out);

  // --- reductions ---
  Tensor sum() const;
  Tensor mean() const;
  Tensor sum_axes(const std::vector<int>& axes, bool keepdims) const;
  Tensor mean_axes(const std::vector<int>& axes, bool keepdims) const;

  // --- shape ops ---
  Tensor reshape(Shape new_shape) const;
  Tensor slice(int axis, int start, int len) const;
  static Tensor concat(const std::vector<Tensor>& parts, int axis);
  // [N,F] -> [N*r,F], each row repeated r consecutive times
  Tensor repeat_rows(int r) const;
  // [N,F] -> [N,m*F], the F-block tiled m times
  Tensor tile_cols(int m) const;

  // --- softmax family (last axis) ---
  Tensor softmax() const;
  // Numerically stable log-sum-exp over the last axis, keepdims result.
  Tensor logsumexp() const;
  Tensor log_softmax() const { return sub(logsumexp()); }

  // --- 2D convolution (NCHW) ---
  Tensor conv2d(const Tensor& kernel, int stride, int pad) const;  // kernel [Co,Ci,kh,kw]
  Tensor maxpool2d(int k, int stride) const;

  std::shared_ptr<detail::Node> node() const { return n_; }

 private:
  std::shared_ptr<detail::Node> n_;
};

// Convenience free functions mirroring the members.
inline Tensor operator+(const Tensor& a, const Tensor& b) { return a.add(b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return a.sub(b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return a.mul(b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return a.div(b); }

}  // namespace hypervae
