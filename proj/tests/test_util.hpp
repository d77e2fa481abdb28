#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hypervae/tensor.hpp"

namespace hvtest {

using hypervae::Tensor;

// Central finite differences against the tape gradients. `build_loss` must
// construct a fresh graph from the leaves' current data on every call. When
// `probe_limit` > 0 only that many evenly spaced elements per leaf are probed
// (enough for big weight tensors).
struct GradCheck {
  double max_rel_err = 0.0;
  int checked = 0;
};

inline GradCheck check_gradients(const std::vector<Tensor>& leaves, const std::function<Tensor()>& build_loss,
                                 double step = 1e-5, int probe_limit = 0) {
  for (auto l : leaves) l.zero_grad();
  Tensor loss = build_loss();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& l : leaves) analytic.push_back(l.grad());

  GradCheck r;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    auto& data = leaf.mutable_data();
    const std::size_t n = data.size();
    std::size_t stride = 1;
    if (probe_limit > 0 && n > static_cast<std::size_t>(probe_limit))
      stride = n / static_cast<std::size_t>(probe_limit);
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = data[i];
      data[i] = saved + step;
      const double fp = build_loss().value();
      data[i] = saved - step;
      const double fm = build_loss().value();
      data[i] = saved;
      const double fd = (fp - fm) / (2.0 * step);
      const double an = analytic[li][i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-3});
      r.max_rel_err = std::max(r.max_rel_err, std::abs(fd - an) / denom);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace hvtest
