#include "hypervae/forecast.hpp"

#include <cmath>
#include <stdexcept>

namespace hypervae::forecast {

using scenes::kFutureSteps;
using scenes::kMaxAgents;
using scenes::kPastSteps;

Instance make_instance(const scenes::Episode& episode, int target) {
  auto [tc, pose] = scenes::to_target_centric(episode, target);
  Instance inst;
  inst.raster = scenes::rasterize(tc);
  inst.histories.assign(static_cast<std::size_t>(kMaxAgents) * kPastSteps * 2, kSentinel);
  inst.mask.fill(0.0);
  auto put = [&](int slot, const scenes::Agent& a) {
    for (int k = 0; k < kPastSteps; ++k) {
      inst.histories[(static_cast<std::size_t>(slot) * kPastSteps + k) * 2] = a.traj[static_cast<std::size_t>(k)].x;
      inst.histories[(static_cast<std::size_t>(slot) * kPastSteps + k) * 2 + 1] =
          a.traj[static_cast<std::size_t>(k)].y;
    }
  };
  const auto& tgt = tc.agents[static_cast<std::size_t>(target)];
  put(0, tgt);
  int slot = 1;
  for (std::size_t a = 0; a < tc.agents.size() && slot < kMaxAgents; ++a) {
    if (static_cast<int>(a) == target) continue;
    put(slot, tc.agents[a]);
    inst.mask[static_cast<std::size_t>(slot) - 1] = 1.0;
    ++slot;
  }
  for (int k = 0; k < kFutureSteps; ++k)
    inst.future[static_cast<std::size_t>(k)] = tgt.traj[static_cast<std::size_t>(kPastSteps + k)];
  inst.tag = episode.tag;
  inst.role = episode.agents[static_cast<std::size_t>(target)].role;
  inst.mode = episode.agents[static_cast<std::size_t>(target)].mode;
  return inst;
}

// --- LstmStack --------------------------------------------------------------

LstmStack::LstmStack(ParamStore& ps, const std::string& prefix, int input, int hidden, Rng& rng)
    : input_(input), hidden_(hidden) {
  const double sx = std::sqrt(1.0 / input);
  const double sh = std::sqrt(1.0 / hidden);
  wx1_ = ps.add_randn(prefix + ".wx1", {input, 4 * hidden}, rng, sx);
  wh1_ = ps.add_randn(prefix + ".wh1", {hidden, 4 * hidden}, rng, sh);
  b1_ = ps.add_zeros(prefix + ".b1", {1, 4 * hidden});
  wx2_ = ps.add_randn(prefix + ".wx2", {hidden, 4 * hidden}, rng, sh);
  wh2_ = ps.add_randn(prefix + ".wh2", {hidden, 4 * hidden}, rng, sh);
  b2_ = ps.add_zeros(prefix + ".b2", {1, 4 * hidden});
}

Tensor LstmStack::step(const Tensor& x, Tensor& h, Tensor& c, const Tensor& wx, const Tensor& wh,
                       const Tensor& b) const {
  Tensor gates = x.matmul(wx).add(h.matmul(wh)).add(b);
  Tensor i = gates.slice(1, 0, hidden_).sigmoid();
  Tensor f = gates.slice(1, hidden_, hidden_).sigmoid();
  Tensor g = gates.slice(1, 2 * hidden_, hidden_).tanh_();
  Tensor o = gates.slice(1, 3 * hidden_, hidden_).sigmoid();
  c = f.mul(c).add(i.mul(g));
  h = o.mul(c.tanh_());
  return h;
}

Tensor LstmStack::forward(const Tensor& seq) const {
  if (seq.rank() != 3 || seq.dim(2) != input_)
    throw std::invalid_argument("lstm: expected [N,T," + std::to_string(input_) + "], got " + shape_str(seq.shape()));
  if (seq.dim(1) != kPastSteps)
    throw std::invalid_argument("lstm: expected " + std::to_string(kPastSteps) + " timesteps, got " +
                                std::to_string(seq.dim(1)));
  const int N = seq.dim(0), T = seq.dim(1);
  Tensor h1 = Tensor::zeros({N, hidden_});
  Tensor c1 = Tensor::zeros({N, hidden_});
  Tensor h2 = Tensor::zeros({N, hidden_});
  Tensor c2 = Tensor::zeros({N, hidden_});
  for (int t = 0; t < T; ++t) {
    Tensor x = seq.slice(1, t, 1).reshape({N, input_});
    Tensor y1 = step(x, h1, c1, wx1_, wh1_, b1_);
    step(y1, h2, c2, wx2_, wh2_, b2_);
  }
  return h2;
}

// --- SocialModule -----------------------------------------------------------

SocialModule::SocialModule(ParamStore& ps, const ForecastArch& arch, Rng& rng)
    : arch_(arch),
      ref_(ps, "social.ref", 2, arch.social_ref_hidden, rng),
      traffic_(ps, "social.traffic", 2, arch.social_traffic_hidden, rng),
      pool_(ps, "social.pool", arch.social_traffic_hidden, arch.social_traffic_hidden, rng) {}

Tensor SocialModule::forward(const Tensor& histories, const Tensor& mask) const {
  if (histories.rank() != 4 || histories.dim(1) != kMaxAgents || histories.dim(2) != kPastSteps ||
      histories.dim(3) != 2)
    throw std::invalid_argument("social: expected [N,5,10,2] histories, got " + shape_str(histories.shape()));
  const int N = histories.dim(0);
  Tensor h_ref = ref_.forward(histories.slice(1, 0, 1).reshape({N, kPastSteps, 2}));
  Tensor others = histories.slice(1, 1, kMaxAgents - 1).reshape({N * (kMaxAgents - 1), kPastSteps, 2});
  Tensor h_all = traffic_.forward(others).reshape({N, kMaxAgents - 1, arch_.social_traffic_hidden});
  Tensor pooled = h_all.mul(mask.reshape({N, kMaxAgents - 1, 1})).sum_axes({1}, false);
  Tensor h_traffic = pool_.forward(pooled.reshape({N, arch_.social_traffic_hidden}));
  return Tensor::concat({h_ref, h_traffic}, 1);
}

// --- SpatialModule ----------------------------------------------------------

SpatialModule::SpatialModule(ParamStore& ps, ParamStore& buffers, const ForecastArch& arch, Rng& rng)
    : arch_(arch) {
  int in_ch = scenes::kRasterChannels;
  for (std::size_t b = 0; b < arch.spatial_channels.size(); ++b) {
    const int c = arch.spatial_channels[b];
    Block blk;
    for (int l = 0; l < 5; ++l) {
      const int ci = (l == 0 ? in_ch : c) + 2;  // +2 coordinate channels
      const std::string name = "spatial.b" + std::to_string(b) + ".conv" + std::to_string(l);
      blk.kernels.push_back(ps.add_randn(name + ".k", {c, ci, 3, 3}, rng, std::sqrt(1.0 / (9.0 * ci))));
      blk.biases.push_back(ps.add_zeros(name + ".b", {1, c, 1, 1}));
    }
    const std::string bn = "spatial.b" + std::to_string(b) + ".bn";
    blk.bn_gamma = ps.add_full(bn + ".gamma", {1, c, 1, 1}, 1.0);
    blk.bn_beta = ps.add_zeros(bn + ".beta", {1, c, 1, 1});
    blk.bn_mean = buffers.add_buffer(bn + ".mean", Tensor::zeros({1, c, 1, 1}));
    blk.bn_var = buffers.add_buffer(bn + ".var", Tensor::full({1, c, 1, 1}, 1.0));
    blocks_.push_back(blk);
    in_ch = c;
  }
  out_ = Linear(ps, "spatial.out", arch.spatial_channels.back(), arch.spatial_out, rng);
}

Tensor SpatialModule::coordconv(const Tensor& x, const Tensor& kernel, const Tensor& bias) const {
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  std::vector<double> coords(static_cast<std::size_t>(N) * 2 * H * W);
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const std::size_t base = ((static_cast<std::size_t>(n) * 2) * H + i) * W + j;
        coords[base] = W > 1 ? 2.0 * j / (W - 1) - 1.0 : 0.0;                                  // x channel
        coords[base + static_cast<std::size_t>(H) * W] = H > 1 ? 2.0 * i / (H - 1) - 1.0 : 0.0;  // y channel
      }
  Tensor ct({N, 2, H, W}, std::move(coords));
  Tensor augmented = Tensor::concat({x, ct}, 1);
  return augmented.conv2d(kernel, 1, 1).add(bias);
}

Tensor SpatialModule::batchnorm(Block& blk, const Tensor& x, bool training) {
  const double eps = 1e-5;
  if (training) {
    Tensor m = x.mean_axes({0, 2, 3}, true);
    Tensor v = x.sub(m).square().mean_axes({0, 2, 3}, true);
    // update running statistics with the batch values
    auto& rm = blk.bn_mean.mutable_data();
    auto& rv = blk.bn_var.mutable_data();
    for (std::size_t i = 0; i < rm.size(); ++i) {
      rm[i] = 0.9 * rm[i] + 0.1 * m.at(i);
      rv[i] = 0.9 * rv[i] + 0.1 * v.at(i);
    }
    return x.sub(m).div(v.add_scalar(eps).sqrt_()).mul(blk.bn_gamma).add(blk.bn_beta);
  }
  return x.sub(blk.bn_mean).div(blk.bn_var.add_scalar(eps).sqrt_()).mul(blk.bn_gamma).add(blk.bn_beta);
}

Tensor SpatialModule::forward(const Tensor& raster, bool training) {
  if (raster.rank() != 4 || raster.dim(1) != scenes::kRasterChannels)
    throw std::invalid_argument("spatial: expected [N,3,S,S] raster, got " + shape_str(raster.shape()));
  const int S = raster.dim(2);
  if (raster.dim(3) != S || S < 16)
    throw std::invalid_argument("spatial: extent must be square and at least 16 px, got " +
                                shape_str(raster.shape()));
  Tensor h = raster;
  for (auto& blk : blocks_) {
    Tensor y1 = coordconv(h, blk.kernels[0], blk.biases[0]).relu();
    Tensor y2 = coordconv(y1, blk.kernels[1], blk.biases[1]).relu();
    Tensor y3 = coordconv(y2, blk.kernels[2], blk.biases[2]).add(y1).relu();
    Tensor y4 = coordconv(y3, blk.kernels[3], blk.biases[3]).relu();
    Tensor y5 = coordconv(y4, blk.kernels[4], blk.biases[4]).add(y3).relu();
    Tensor pooled = y5.maxpool2d(2, 2);
    h = batchnorm(blk, pooled, training);
  }
  Tensor flat = h.mean_axes({2, 3}, false);  // global average pool -> [N, C]
  return out_.forward(flat);
}

// --- TimeModule ---------------------------------------------------------------

TimeModule::TimeModule(ParamStore& ps, const ForecastArch& arch, Rng& rng)
    : l1_(ps, "time.l1", 1, arch.time_hidden, rng),
      l2_(ps, "time.l2", arch.time_hidden, arch.time_hidden, rng),
      l3_(ps, "time.l3", arch.time_hidden, arch.time_out, rng) {}

Tensor TimeModule::forward(const Tensor& t_scaled) const {
  return l3_.forward(l2_.forward(l1_.forward(t_scaled).relu()).relu());
}

// --- Hypernet -----------------------------------------------------------------

Hypernet::Hypernet(const ForecastArch& arch, Rng& rng)
    : arch_(arch),
      enc_layout_(WeightLayout::for_widths(arch.vae.encoder_widths())),
      dec_layout_(WeightLayout::for_widths(arch.vae.decoder_widths())),
      social_(params_, arch, rng),
      spatial_(params_, state_, arch, rng),
      time_(params_, arch, rng),
      enc_h1_(params_, "head.enc.l1", arch.feature_dim(), arch.head_hidden, rng),
      enc_h2_(params_, "head.enc.l2", arch.head_hidden, arch.head_hidden, rng),
      enc_h3_(params_, "head.enc.l3", arch.head_hidden, enc_layout_.total, rng),
      dec_h1_(params_, "head.dec.l1", arch.feature_dim(), arch.head_hidden, rng),
      dec_h2_(params_, "head.dec.l2", arch.head_hidden, arch.head_hidden, rng),
      dec_h3_(params_, "head.dec.l3", arch.head_hidden, dec_layout_.total, rng) {
  state_.adopt("", params_);
}

Tensor Hypernet::fused_features(const std::vector<const Instance*>& instances, bool training) {
  const int I = static_cast<int>(instances.size());
  const int S = arch_.raster_size;
  std::vector<double> rasters, hists, masks;
  rasters.reserve(static_cast<std::size_t>(I) * 3 * S * S);
  hists.reserve(static_cast<std::size_t>(I) * kMaxAgents * kPastSteps * 2);
  masks.reserve(static_cast<std::size_t>(I) * (kMaxAgents - 1));
  for (const Instance* inst : instances) {
    if (static_cast<int>(inst->raster.size()) != 3 * S * S)
      throw std::invalid_argument("instance raster does not match the configured extent");
    rasters.insert(rasters.end(), inst->raster.begin(), inst->raster.end());
    for (double v : inst->histories) hists.push_back(v * arch_.history_scale);
    masks.insert(masks.end(), inst->mask.begin(), inst->mask.end());
  }
  Tensor raster({I, 3, S, S}, std::move(rasters));
  Tensor hist({I, kMaxAgents, kPastSteps, 2}, std::move(hists));
  Tensor mask({I, kMaxAgents - 1}, std::move(masks));
  Tensor h_social = social_.forward(hist, mask);
  Tensor h_spatial = spatial_.forward(raster, training);
  return Tensor::concat({h_social, h_spatial}, 1);  // [I, 160]
}

Tensor Hypernet::time_features(const std::vector<double>& times) const {
  std::vector<double> scaled;
  scaled.reserve(times.size());
  for (double t : times) {
    if (t < 0.0 || t > kHorizon)
      throw std::invalid_argument("query time " + std::to_string(t) + " outside [0, " + std::to_string(kHorizon) + "]");
    scaled.push_back(t / (kHorizon / 2.0) - 1.0);
  }
  Tensor tt({static_cast<int>(times.size()), 1}, std::move(scaled));
  return time_.forward(tt);
}

Hypernet::Thetas Hypernet::forward(const std::vector<const Instance*>& instances, int queries,
                                   const std::vector<double>& times, bool training) {
  const int I = static_cast<int>(instances.size());
  if (I == 0 || queries < 1) throw std::invalid_argument("hypernet: need at least one instance and one query");
  if (static_cast<int>(times.size()) != I * queries)
    throw std::invalid_argument("hypernet: times must hold queries-per-instance entries for every instance");
  Tensor features = fused_features(instances, training).repeat_rows(queries);  // [I*r, 160]
  Tensor fused = Tensor::concat({features, time_features(times)}, 1);          // [I*r, 170]
  Tensor he = enc_h2_.forward(enc_h1_.forward(fused).relu()).relu();
  Tensor hd = dec_h2_.forward(dec_h1_.forward(fused).relu()).relu();
  Tensor theta_enc = enc_h3_.forward(he).mul_scalar(arch_.output_gain);
  Tensor theta_dec = dec_h3_.forward(hd).mul_scalar(arch_.output_gain);
  return {ThetaView::per_element(theta_enc), ThetaView::per_element(theta_dec)};
}

Tensor Hypernet::instance_features(const Instance& inst, bool training) {
  return fused_features({&inst}, training);
}

Tensor Hypernet::decoder_theta(const Tensor& features, double t1) const {
  Tensor fused = Tensor::concat({features, time_features({t1})}, 1);
  Tensor hd = dec_h2_.forward(dec_h1_.forward(fused).relu()).relu();
  return dec_h3_.forward(hd).mul_scalar(arch_.output_gain);
}

std::vector<std::vector<scenes::Vec2>> sample_trajectories(Hypernet& net, const Instance& inst, int k, Rng& rng) {
  Tensor features = net.instance_features(inst, false).detach();
  Tensor z = Tensor::randn({k, net.arch().vae.latent_dim}, rng);  // shared across the horizon
  std::vector<std::vector<scenes::Vec2>> trajs(static_cast<std::size_t>(k));
  for (auto& t : trajs) t.resize(kFutureSteps);
  const double unscale = 1.0 / net.arch().target_scale;
  for (int j = 0; j < kFutureSteps; ++j) {
    const double t1 = (j + 1) * scenes::kDt;
    Tensor theta = net.decoder_theta(features, t1).detach();
    GmmHeads heads = decode(z, ThetaView::shared(theta), net.arch().vae);
    for (int s = 0; s < k; ++s) {
      prob::GmmParams p = gmm_params_from_heads(heads, s, net.arch().vae);
      auto pt = prob::gmm_sample(p, rng);
      trajs[static_cast<std::size_t>(s)][static_cast<std::size_t>(j)] = {pt[0] * unscale, pt[1] * unscale};
    }
  }
  return trajs;
}

}  // namespace hypervae::forecast
