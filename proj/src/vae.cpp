#include "hypervae/vae.hpp"

#include <cmath>
#include <stdexcept>

namespace hypervae {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kPosteriorSigmaFloor = 1e-8;
constexpr double kPosteriorSigmaCap = 1e8;

// Run x through the fully connected stack described by `layout` using
// weights cut out of the generated vector(s). ReLU between layers, linear
// head.
Tensor run_stack(const Tensor& x, const ThetaView& theta, const WeightLayout& layout, const char* role) {
  if (theta.length() != layout.total)
    throw std::invalid_argument(std::string(role) + ": generated weight length " + std::to_string(theta.length()) +
                                " does not match layout size " + std::to_string(layout.total));
  if (theta.per_row && theta.rows.shape()[0] != x.shape()[0])
    throw std::invalid_argument(std::string(role) + ": weight rows do not match batch size");
  Tensor h = x;
  for (std::size_t li = 0; li < layout.layers.size(); ++li) {
    const LayerSlice& L = layout.layers[li];
    if (h.shape()[1] != L.in)
      throw std::invalid_argument(std::string(role) + ": input width " + std::to_string(h.shape()[1]) +
                                  " does not match layer expecting " + std::to_string(L.in));
    if (theta.per_row) {
      Tensor w = theta.rows.slice(1, L.offset, L.weight_len());
      Tensor b = theta.rows.slice(1, L.offset + L.weight_len(), L.out);
      h = Tensor::rowwise_linear(h, w, b, L.in, L.out);
    } else {
      Tensor w = theta.rows.slice(1, L.offset, L.weight_len()).reshape({L.in, L.out});
      Tensor b = theta.rows.slice(1, L.offset + L.weight_len(), L.out);
      h = h.matmul(w).add(b);
    }
    if (li + 1 < layout.layers.size()) h = h.relu();
  }
  return h;
}

}  // namespace

std::vector<int> VaeArch::encoder_widths() const {
  std::vector<int> w{target_dim};
  w.insert(w.end(), encoder_hidden.begin(), encoder_hidden.end());
  w.push_back(2 * latent_dim);
  return w;
}

std::vector<int> VaeArch::decoder_widths() const {
  std::vector<int> w{latent_dim};
  w.insert(w.end(), decoder_hidden.begin(), decoder_hidden.end());
  w.push_back(decoder_head_width());
  return w;
}

WeightLayout WeightLayout::for_widths(const std::vector<int>& widths) {
  if (widths.size() < 2) throw std::invalid_argument("WeightLayout: need at least one layer");
  WeightLayout l;
  int off = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    LayerSlice s{off, widths[i], widths[i + 1]};
    l.layers.push_back(s);
    off += s.total_len();
  }
  l.total = off;
  return l;
}

Posterior encode(const Tensor& x, const ThetaView& theta_enc, const VaeArch& arch) {
  const WeightLayout layout = WeightLayout::for_widths(arch.encoder_widths());
  Tensor out = run_stack(x, theta_enc, layout, "encode");
  Tensor mu = out.slice(1, 0, arch.latent_dim);
  Tensor logvar = out.slice(1, arch.latent_dim, arch.latent_dim);
  // clamp in log space: forward identical to clamping exp(.), backward never
  // sees the unbounded exponential
  Tensor sigma =
      logvar.mul_scalar(0.5).clamp(std::log(kPosteriorSigmaFloor), std::log(kPosteriorSigmaCap)).exp_();
  return {mu, sigma};
}

Tensor reparameterize(const Posterior& q, const Tensor& eps) {
  return q.mean.add(q.stddev.mul(eps));
}

GmmHeads decode(const Tensor& z, const ThetaView& theta_dec, const VaeArch& arch) {
  const WeightLayout layout = WeightLayout::for_widths(arch.decoder_widths());
  Tensor out = run_stack(z, theta_dec, layout, "decode");
  const int mx = arch.mixture_components * arch.target_dim;
  Tensor means = out.slice(1, 0, mx);
  Tensor sigma = out.slice(1, mx, mx).clamp(std::log(kDecoderSigmaFloor), std::log(kDecoderSigmaCap)).exp_();
  Tensor logits = out.slice(1, 2 * mx, arch.mixture_components);
  return {means, sigma, logits};
}

Tensor gmm_log_prob_tensor(const GmmHeads& heads, const Tensor& x, const VaeArch& arch) {
  const int N = x.shape()[0];
  const int X = arch.target_dim;
  const int M = arch.mixture_components;
  Tensor xt = x.tile_cols(M);                     // [N, M*X]
  Tensor zed = xt.sub(heads.means).div(heads.stddev);
  Tensor quad = zed.square().reshape({N * M, X}).sum_axes({1}, true).reshape({N, M});
  Tensor logdet = heads.stddev.log_().reshape({N * M, X}).sum_axes({1}, true).reshape({N, M});
  Tensor comp_ll = quad.mul_scalar(-0.5).sub(logdet).add_scalar(-0.5 * X * kLog2Pi);
  Tensor log_mix = heads.logits.log_softmax();    // [N, M]
  return comp_ll.add(log_mix).logsumexp();        // [N, 1]
}

Tensor kl_to_standard_tensor(const Posterior& q) {
  Tensor s2 = q.stddev.square();
  Tensor terms = q.mean.square().add(s2).add_scalar(-1.0).sub(q.stddev.log_().mul_scalar(2.0));
  return terms.sum_axes({1}, true).mul_scalar(0.5);  // [N, 1]
}

ElboGraph elbo_graph(const Tensor& x, const ThetaView& theta_enc, const ThetaView& theta_dec, const VaeArch& arch,
                     const Tensor& eps, double kl_weight) {
  Posterior q = encode(x, theta_enc, arch);
  Tensor z = reparameterize(q, eps);
  GmmHeads heads = decode(z, theta_dec, arch);
  ElboGraph g;
  g.recon = gmm_log_prob_tensor(heads, x, arch);
  g.kl = kl_to_standard_tensor(q);
  g.mean_elbo = g.recon.sub(g.kl).mean();
  Tensor weighted = kl_weight == 1.0 ? g.mean_elbo : g.recon.sub(g.kl.mul_scalar(kl_weight)).mean();
  g.loss = weighted.neg();
  for (double v : g.recon.data())
    if (std::isnan(v)) throw std::runtime_error("elbo: reconstruction term is NaN");
  for (double v : g.kl.data())
    if (std::isnan(v)) throw std::runtime_error("elbo: KL term is NaN");
  return g;
}

ElboReport elbo_report(const std::vector<double>& x, const Tensor& theta_enc_row, const Tensor& theta_dec_row,
                       const VaeArch& arch, Rng& rng) {
  Tensor xb({1, static_cast<int>(x.size())}, x);
  Tensor eps = Tensor::randn({1, arch.latent_dim}, rng);
  ElboGraph g = elbo_graph(xb, ThetaView::shared(theta_enc_row), ThetaView::shared(theta_dec_row), arch, eps);
  ElboReport r;
  r.reconstruction = g.recon.at(0);
  r.kl = g.kl.at(0);
  r.elbo = r.reconstruction - r.kl;
  return r;
}

prob::GmmParams gmm_params_from_heads(const GmmHeads& heads, int row, const VaeArch& arch) {
  const int X = arch.target_dim;
  const int M = arch.mixture_components;
  prob::GmmParams p;
  const auto& mu = heads.means.data();
  const auto& sd = heads.stddev.data();
  const auto& lg = heads.logits.data();
  const std::size_t mu_off = static_cast<std::size_t>(row) * M * X;
  const std::size_t lg_off = static_cast<std::size_t>(row) * M;
  double mx = lg[lg_off];
  for (int m = 1; m < M; ++m) mx = std::max(mx, lg[lg_off + m]);
  double wsum = 0.0;
  for (int m = 0; m < M; ++m) {
    p.means.emplace_back(mu.begin() + mu_off + static_cast<std::size_t>(m) * X,
                         mu.begin() + mu_off + static_cast<std::size_t>(m + 1) * X);
    p.stddevs.emplace_back(sd.begin() + mu_off + static_cast<std::size_t>(m) * X,
                           sd.begin() + mu_off + static_cast<std::size_t>(m + 1) * X);
    const double w = std::exp(lg[lg_off + m] - mx);
    p.weights.push_back(w);
    wsum += w;
  }
  for (auto& w : p.weights) w /= wsum;
  double s = 0.0;
  for (double w : p.weights) s += w;
  p.weights.back() += 1.0 - s;
  return p;
}

std::vector<std::vector<double>> generate(const Tensor& theta_dec_row, const VaeArch& arch, Rng& rng, int n) {
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(n));
  const ThetaView theta = ThetaView::shared(theta_dec_row.detach());
  const int chunk = 4096;
  for (int done = 0; done < n; done += chunk) {
    const int b = std::min(chunk, n - done);
    Tensor z = Tensor::randn({b, arch.latent_dim}, rng);
    GmmHeads heads = decode(z, theta, arch);
    for (int i = 0; i < b; ++i) {
      prob::GmmParams p = gmm_params_from_heads(heads, i, arch);
      out.push_back(prob::gmm_sample(p, rng));
    }
  }
  return out;
}

double conditional_log_prob(const Tensor& theta_dec_row, const VaeArch& arch, const std::vector<double>& x, Rng& rng,
                            int z_draws) {
  if (z_draws < 1) throw std::invalid_argument("conditional_log_prob: need at least one Z draw");
  const ThetaView theta = ThetaView::shared(theta_dec_row.detach());
  Tensor z = Tensor::randn({z_draws, arch.latent_dim}, rng);
  GmmHeads heads = decode(z, theta, arch);
  if (z_draws == 1) return prob::gmm_log_prob(gmm_params_from_heads(heads, 0, arch), x);
  // log mean_k p(x | z_k)
  std::vector<double> lps(static_cast<std::size_t>(z_draws));
  for (int k = 0; k < z_draws; ++k) lps[k] = prob::gmm_log_prob(gmm_params_from_heads(heads, k, arch), x);
  double mx = lps[0];
  for (double v : lps) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : lps) s += std::exp(v - mx);
  return mx + std::log(s / z_draws);
}

}  // namespace hypervae
