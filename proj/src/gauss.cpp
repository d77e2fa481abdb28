#include "hypervae/gauss.hpp"

#include <cmath>
#include <stdexcept>

namespace hypervae::gauss {

prob::GmmParams grid_mixture(const GridMixtureSpec& spec) {
  if (spec.k < 1) throw std::invalid_argument("grid_mixture: k must be positive");
  prob::GmmParams p;
  const int n = spec.k * spec.k;
  const double w = 1.0 / n;
  for (int i = 0; i < spec.k; ++i)
    for (int j = 0; j < spec.k; ++j) {
      const double cx = spec.k == 1 ? 0.5 * (spec.lo + spec.hi)
                                    : spec.lo + (spec.hi - spec.lo) * i / (spec.k - 1);
      const double cy = spec.k == 1 ? 0.5 * (spec.lo + spec.hi)
                                    : spec.lo + (spec.hi - spec.lo) * j / (spec.k - 1);
      p.means.push_back({cx, cy});
      p.stddevs.push_back({spec.sigma, spec.sigma});
      p.weights.push_back(w);
    }
  double s = 0.0;
  for (double v : p.weights) s += v;
  p.weights.back() += 1.0 - s;
  return p;
}

prob::GmmParams point_target(double cx, double cy, double sigma) {
  return {{{cx, cy}}, {{sigma, sigma}}, {1.0}};
}

std::vector<double> ExperimentSpec::standardize(const std::vector<double>& c) const {
  if (c.size() != static_cast<std::size_t>(condition_dim))
    throw std::invalid_argument("condition dimension " + std::to_string(c.size()) + " does not match experiment (" +
                                std::to_string(condition_dim) + ")");
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = (c[i] - cond_mean[i]) / cond_std[i];
  return out;
}

ExperimentSpec gauss1_spec(double sigma_2x2, double sigma_5x5, double sigma_10x10) {
  ExperimentSpec s;
  s.condition_dim = 1;
  s.train_conditions = {{0.0}, {1.0}, {2.0}};
  s.targets = {grid_mixture({2, -2.0, 2.0, sigma_2x2}), grid_mixture({5, -4.0, 4.0, sigma_5x5}),
               grid_mixture({10, -4.5, 4.5, sigma_10x10})};
  s.cond_mean = {1.0};
  s.cond_std = {std::sqrt(2.0 / 3.0)};
  return s;
}

ExperimentSpec gauss2_spec(double sigma) {
  ExperimentSpec s;
  s.condition_dim = 2;
  s.train_conditions = {{0.0, 0.0}, {-4.0, 4.0}, {4.0, 4.0}, {4.0, -4.0}, {-4.0, -4.0}};
  for (const auto& c : s.train_conditions) s.targets.push_back(point_target(c[0], c[1], sigma));
  s.cond_mean = {0.0, 0.0};
  const double std2 = std::sqrt((0.0 + 16.0 * 4) / 5.0);
  s.cond_std = {std2, std2};
  return s;
}

std::vector<std::vector<double>> gauss2_unseen_conditions() {
  return {{0.0, 4.0}, {4.0, 0.0}, {0.0, -4.0}, {-4.0, 0.0}};
}

Hypernet::Hypernet(const VaeArch& arch, int condition_dim, int hidden, Rng& init_rng, double output_gain)
    : arch_(arch),
      enc_layout_(WeightLayout::for_widths(arch.encoder_widths())),
      dec_layout_(WeightLayout::for_widths(arch.decoder_widths())),
      cond_dim_(condition_dim),
      hidden_(hidden),
      output_gain_(output_gain) {
  const int out = output_length();
  // The second layer's scale sets the magnitude of the emitted weights;
  // keep it small so the generated networks start near zero.
  w1_ = params_.add_randn("hyper.W1", {cond_dim_, hidden_}, init_rng, 1.0);
  b1_ = params_.add_randn("hyper.b1", {1, hidden_}, init_rng, 0.5);
  w2_ = params_.add_randn("hyper.W2", {hidden_, out}, init_rng, 1.0 / std::sqrt(hidden_));
  b2_ = params_.add_zeros("hyper.b2", {1, out});
}

Tensor Hypernet::emit(const std::vector<double>& c) const {
  if (c.size() != static_cast<std::size_t>(cond_dim_))
    throw std::invalid_argument("hypernet: condition dimension " + std::to_string(c.size()) + ", expected " +
                                std::to_string(cond_dim_));
  Tensor cb({1, cond_dim_}, c);
  Tensor h = cb.matmul(w1_).add(b1_).relu();
  return h.matmul(w2_).add(b2_).mul_scalar(output_gain_);
}

std::pair<ThetaView, ThetaView> Hypernet::forward(const std::vector<double>& c) const {
  Tensor full = emit(c);
  Tensor enc = full.slice(1, 0, enc_layout_.total);
  Tensor dec = full.slice(1, enc_layout_.total, dec_layout_.total);
  return {ThetaView::shared(enc), ThetaView::shared(dec)};
}

}  // namespace hypervae::gauss
