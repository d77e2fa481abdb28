#pragma once

#include <utility>
#include <vector>

#include "hypervae/nn.hpp"
#include "hypervae/vae.hpp"

namespace hypervae::gauss {

// k-by-k grid of isotropic Gaussians, centers evenly spaced on [lo, hi]^2,
// uniform mixing probabilities.
struct GridMixtureSpec {
  int k;
  double lo;
  double hi;
  double sigma;
};

prob::GmmParams grid_mixture(const GridMixtureSpec& spec);

// Single isotropic Gaussian centered on the condition (the second
// experiment's target family).
prob::GmmParams point_target(double cx, double cy, double sigma);

// A conditional generative benchmark: raw train conditions, their target
// mixtures, and the standardization applied before the hypernetwork.
struct ExperimentSpec {
  int condition_dim = 1;
  std::vector<std::vector<double>> train_conditions;
  std::vector<prob::GmmParams> targets;
  std::vector<double> cond_mean, cond_std;

  std::vector<double> standardize(const std::vector<double>& c) const;
};

// Class codes {0,1,2} selecting 2x2 / 5x5 / 10x10 Gaussian grids.
ExperimentSpec gauss1_spec(double sigma_2x2, double sigma_5x5, double sigma_10x10);

// Five isotropic Gaussians whose means are the conditions (center plus the
// four corners of an 8m square), component sigma 0.5.
ExperimentSpec gauss2_spec(double sigma = 0.5);

// Interpolation probes for the generalization check: the edge midpoints.
std::vector<std::vector<double>> gauss2_unseen_conditions();

// 2-layer ReLU MLP emitting the full flat [theta_enc | theta_dec] vector
// from a standardized condition. The only trainable parameters in the whole
// model live here.
class Hypernet {
 public:
  // `output_gain` scales the emitted weight vector; it tames the step size
  // the optimizer induces on the generated weights (column-aligned gradients
  // through the wide output layer would otherwise move them by roughly
  // lr * |h|_1 per step).
  Hypernet(const VaeArch& arch, int condition_dim, int hidden, Rng& init_rng, double output_gain = 0.1);

  ParamStore& params() { return params_; }
  const VaeArch& arch() const { return arch_; }
  int condition_dim() const { return cond_dim_; }
  int hidden() const { return hidden_; }
  int output_length() const { return enc_layout_.total + dec_layout_.total; }

  // Full emitted weight row, differentiable w.r.t. the hypernet parameters.
  Tensor emit(const std::vector<double>& c_standardized) const;

  // Convenience split into encoder/decoder shared views.
  std::pair<ThetaView, ThetaView> forward(const std::vector<double>& c_standardized) const;

 private:
  VaeArch arch_;
  WeightLayout enc_layout_, dec_layout_;
  int cond_dim_, hidden_;
  double output_gain_;
  ParamStore params_;
  Tensor w1_, b1_, w2_, b2_;
};

}  // namespace hypervae::gauss
