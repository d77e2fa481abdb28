#pragma once

#include <string>
#include <vector>

#include "hypervae/prob.hpp"
#include "hypervae/tensor.hpp"

namespace hypervae {

// Architecture of the encoder/decoder pair whose weights are produced by a
// hypernetwork. The encoder emits a diagonal-Gaussian posterior (mean and
// log-variance), the decoder a Gaussian-mixture head over the target.
struct VaeArch {
  int target_dim = 2;
  int latent_dim = 2;
  int mixture_components = 10;
  std::vector<int> encoder_hidden = {32, 32, 32};
  std::vector<int> decoder_hidden = {32, 32, 32};

  std::vector<int> encoder_widths() const;  // [X, hidden..., 2*Z]
  std::vector<int> decoder_widths() const;  // [Z, hidden..., M*(2*X+1)]
  int decoder_head_width() const { return mixture_components * (2 * target_dim + 1); }
};

// One fully connected layer inside a flat generated-weight vector: the
// [in x out] weight block (row-major) at `offset`, then the bias.
struct LayerSlice {
  int offset;
  int in;
  int out;
  int weight_len() const { return in * out; }
  int total_len() const { return in * out + out; }
};

// Contiguous tiling of a flat weight vector by layers: no gaps, no overlaps.
struct WeightLayout {
  std::vector<LayerSlice> layers;
  int total = 0;

  static WeightLayout for_widths(const std::vector<int>& widths);
};

// Generated weights for one forward pass: either a single row shared by the
// whole batch (one condition) or one row per batch element.
struct ThetaView {
  Tensor rows;  // [1, L] shared or [N, L] per element
  bool per_row = false;

  int length() const { return rows.shape()[1]; }
  static ThetaView shared(Tensor t) { return {t, false}; }
  static ThetaView per_element(Tensor t) { return {t, true}; }
};

// Diagonal-Gaussian posterior tensors (stddev already floored/capped).
struct Posterior {
  Tensor mean;    // [N, Z]
  Tensor stddev;  // [N, Z]
};

// Decoder mixture head tensors.
struct GmmHeads {
  Tensor means;   // [N, M*X]
  Tensor stddev;  // [N, M*X], exp of raw output clamped to [1e-4, 1e2]
  Tensor logits;  // [N, M]
};

inline constexpr double kDecoderSigmaFloor = 1e-4;
inline constexpr double kDecoderSigmaCap = 1e2;

Posterior encode(const Tensor& x, const ThetaView& theta_enc, const VaeArch& arch);
Tensor reparameterize(const Posterior& q, const Tensor& eps);
GmmHeads decode(const Tensor& z, const ThetaView& theta_dec, const VaeArch& arch);

// Differentiable log-density of x under the decoded mixture, one value per
// batch row, shape [N, 1].
Tensor gmm_log_prob_tensor(const GmmHeads& heads, const Tensor& x, const VaeArch& arch);

// Closed-form KL(q || N(0, I)) per batch row, shape [N, 1].
Tensor kl_to_standard_tensor(const Posterior& q);

// Full single-draw ELBO graph over a batch.
struct ElboGraph {
  Tensor recon;  // [N, 1]
  Tensor kl;     // [N, 1]
  Tensor mean_elbo;  // scalar
  Tensor loss;       // scalar, -(recon - beta*kl) averaged; beta=1 by default
};

ElboGraph elbo_graph(const Tensor& x, const ThetaView& theta_enc, const ThetaView& theta_dec, const VaeArch& arch,
                     const Tensor& eps, double kl_weight = 1.0);

// Per-example evaluation bundle.
struct ElboReport {
  double reconstruction = 0.0;
  double kl = 0.0;
  double elbo = 0.0;  // reconstruction - kl
};

ElboReport elbo_report(const std::vector<double>& x, const Tensor& theta_enc_row, const Tensor& theta_dec_row,
                       const VaeArch& arch, Rng& rng);

// Extract plain mixture parameters from one decoded head row.
prob::GmmParams gmm_params_from_heads(const GmmHeads& heads, int row, const VaeArch& arch);

// Inference path: Z from the standard-normal prior, decode, sample the
// mixture. The encoder is never touched.
std::vector<std::vector<double>> generate(const Tensor& theta_dec_row, const VaeArch& arch, Rng& rng, int n);

// Log-density of a target point under the decoder given a prior draw of Z
// (the sampling-based evaluation used for the experiment reports).
double conditional_log_prob(const Tensor& theta_dec_row, const VaeArch& arch, const std::vector<double>& x, Rng& rng,
                            int z_draws = 1);

}  // namespace hypervae
