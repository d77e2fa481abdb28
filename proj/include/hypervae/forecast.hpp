#pragma once

#include <array>
#include <string>
#include <vector>

#include "hypervae/nn.hpp"
#include "hypervae/scenes.hpp"
#include "hypervae/vae.hpp"

namespace hypervae::forecast {

inline constexpr double kSentinel = 999999.0;  // absent-agent padding, meters
inline constexpr double kHorizon = 4.0;

// All width choices of the forecasting model in one place so tests can run
// scaled-down variants.
struct ForecastArch {
  VaeArch vae{.target_dim = 2,
              .latent_dim = 8,
              .mixture_components = 6,
              .encoder_hidden = {64, 64, 64},
              .decoder_hidden = {64, 64, 64}};
  int raster_size = scenes::kRasterSize;
  std::vector<int> spatial_channels = {4, 8, 12, 16};
  int social_ref_hidden = 24;
  int social_traffic_hidden = 40;
  int spatial_out = 96;
  int time_hidden = 32;
  int time_out = 10;
  int head_hidden = 64;
  double history_scale = 0.1;  // meters -> network units
  double target_scale = 0.1;   // target positions are modeled in these units
  double output_gain = 0.1;

  int social_out() const { return social_ref_hidden + social_traffic_hidden; }
  int feature_dim() const { return social_out() + spatial_out + time_out; }
};

// One target-centric training/evaluation instance.
struct Instance {
  std::vector<double> raster;                       // [3 * S * S]
  std::vector<double> histories;                    // [5 * 10 * 2], slot 0 = target
  std::array<double, scenes::kMaxAgents - 1> mask;  // presence of non-target slots
  std::array<scenes::Vec2, scenes::kFutureSteps> future;  // target future, meters
  scenes::ScenarioTag tag = scenes::ScenarioTag::Cruise;
  std::string role;
  scenes::AgentMode mode = scenes::AgentMode::Cruise;
};

Instance make_instance(const scenes::Episode& episode, int target);

// Two stacked LSTM layers; forward returns the final hidden state of the
// top layer.
class LstmStack {
 public:
  LstmStack(ParamStore& ps, const std::string& prefix, int input, int hidden, Rng& rng);
  Tensor forward(const Tensor& seq) const;  // [N, T, input] -> [N, hidden]
  int hidden() const { return hidden_; }

 private:
  int input_, hidden_;
  Tensor wx1_, wh1_, b1_, wx2_, wh2_, b2_;
  Tensor step(const Tensor& x, Tensor& h, Tensor& c, const Tensor& wx, const Tensor& wh, const Tensor& b) const;
};

class SocialModule {
 public:
  SocialModule(ParamStore& ps, const ForecastArch& arch, Rng& rng);
  // histories [N, 5, 10, 2] (already scaled), mask [N, 4] -> [N, 64]
  Tensor forward(const Tensor& histories, const Tensor& mask) const;

 private:
  const ForecastArch arch_;
  LstmStack ref_, traffic_;
  Linear pool_;
};

class SpatialModule {
 public:
  SpatialModule(ParamStore& ps, ParamStore& buffers, const ForecastArch& arch, Rng& rng);
  // raster [N, 3, S, S] -> [N, 96]; training mode uses batch statistics and
  // updates the running ones, inference uses the frozen running statistics
  Tensor forward(const Tensor& raster, bool training);

 private:
  struct Block {
    std::vector<Tensor> kernels, biases;  // 5 coordconv layers
    Tensor bn_gamma, bn_beta;
    Tensor bn_mean, bn_var;  // running statistics (buffers)
  };
  ForecastArch arch_;
  std::vector<Block> blocks_;
  Linear out_;
  Tensor coordconv(const Tensor& x, const Tensor& kernel, const Tensor& bias) const;
  Tensor batchnorm(Block& blk, const Tensor& x, bool training);
};

class TimeModule {
 public:
  TimeModule(ParamStore& ps, const ForecastArch& arch, Rng& rng);
  Tensor forward(const Tensor& t_scaled) const;  // [S, 1] -> [S, time_out]

 private:
  Linear l1_, l2_, l3_;
};

// The full conditioning network: social + spatial + time features fused by
// two head MLPs into the flat encoder/decoder weight vectors.
class Hypernet {
 public:
  Hypernet(const ForecastArch& arch, Rng& init_rng);

  const ForecastArch& arch() const { return arch_; }
  ParamStore& params() { return params_; }          // trainable
  ParamStore& state() { return state_; }            // trainable + buffers, for checkpoints
  int theta_enc_len() const { return enc_layout_.total; }
  int theta_dec_len() const { return dec_layout_.total; }

  struct Thetas {
    ThetaView enc;  // [I*r, L_enc]
    ThetaView dec;  // [I*r, L_dec]
  };

  // `instances` are processed once; each contributes `queries` consecutive
  // rows conditioned on times[i*queries + j] (seconds in [0, kHorizon]).
  Thetas forward(const std::vector<const Instance*>& instances, int queries, const std::vector<double>& times,
                 bool training);

  // Instance features [1, 160] cached for repeated per-time decoding.
  Tensor instance_features(const Instance& inst, bool training);
  // Decoder theta row from cached features at one query time.
  Tensor decoder_theta(const Tensor& features, double t1) const;

 private:
  ForecastArch arch_;
  WeightLayout enc_layout_, dec_layout_;
  ParamStore params_;  // trainable only
  ParamStore state_;   // trainable + buffers
  SocialModule social_;
  SpatialModule spatial_;
  TimeModule time_;
  Linear enc_h1_, enc_h2_, enc_h3_, dec_h1_, dec_h2_, dec_h3_;

  Tensor fused_features(const std::vector<const Instance*>& instances, bool training);
  Tensor time_features(const std::vector<double>& times) const;
};

// K sampled target trajectories (meters, target-centric), one shared prior
// draw of Z per sample index across all horizon steps.
std::vector<std::vector<scenes::Vec2>> sample_trajectories(Hypernet& net, const Instance& inst, int k, Rng& rng);

}  // namespace hypervae::forecast
