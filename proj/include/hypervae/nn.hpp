#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hypervae/tensor.hpp"

namespace hypervae {

// Ordered registry of named trainable tensors. Order is the checkpoint and
// optimizer-state order, so it must be construction-deterministic.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor t) {
    if (!t.requires_grad()) throw std::invalid_argument("parameter must require gradients: " + name);
    return add_buffer(name, t);
  }

  // Non-trainable state (e.g. normalization running statistics); checkpointed
  // but never given to an optimizer.
  Tensor add_buffer(const std::string& name, Tensor t) {
    for (const auto& [n, _] : items_)
      if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
    items_.emplace_back(name, t);
    return t;
  }

  Tensor add_randn(const std::string& name, Shape shape, Rng& rng, double stddev) {
    return add(name, Tensor::randn(std::move(shape), rng, stddev, true));
  }

  Tensor add_zeros(const std::string& name, Shape shape) { return add(name, Tensor::zeros(std::move(shape), true)); }
  Tensor add_full(const std::string& name, Shape shape, double v) {
    return add(name, Tensor::full(std::move(shape), v, true));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.numel();
    return n;
  }

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }

  Tensor find(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return t;
    throw std::invalid_argument("no such parameter: " + name);
  }

  void zero_grads() {
    for (auto& [_, t] : items_)
      if (t.requires_grad()) t.zero_grad();
  }

  // Merge another store under a name prefix; tensors stay shared.
  void adopt(const std::string& prefix, const ParamStore& other) {
    for (const auto& [n, t] : other.items_) items_.emplace_back(prefix + n, t);
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// y = x @ W + b helper over plain (non-generated) parameters.
struct Linear {
  Tensor W, b;
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng, double w_std = -1.0) {
    if (w_std < 0.0) w_std = std::sqrt(1.0 / static_cast<double>(in));
    W = ps.add_randn(name + ".W", {in, out}, rng, w_std);
    b = ps.add_zeros(name + ".b", {1, out});
  }
  Tensor forward(const Tensor& x) const { return x.matmul(W).add(b); }
};

}  // namespace hypervae
