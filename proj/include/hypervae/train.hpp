#pragma once

#include <functional>
#include <string>

#include "hypervae/optim.hpp"

namespace hypervae {

struct TrainOptions {
  long max_iterations = 30000;
  double lr = 5e-3;
  double plateau_factor = 0.5;
  long plateau_patience = 2000;
  double plateau_min_delta = 1e-4;
  double lr_stop = 1e-5;   // training ends once the schedule decays below this
  long val_interval = 50;  // validation/log cadence in iterations
  double kl_weight = 1.0;
  long kl_warmup_iters = 0;  // linear ramp of the KL weight from 0; 0 = off
  std::string checkpoint_path;  // written on every validation improvement
  std::string log_path;         // CSV: iteration,train_loss,val_loss,lr
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

struct TrainResult {
  long iterations = 0;
  double best_val_loss = 0.0;
  double final_val_loss = 0.0;
  double final_lr = 0.0;
};

// Generic minibatch loop. `build_loss(iter, kl_weight, rng)` constructs the
// scalar loss graph for one iteration; `val_loss(kl_weight)` evaluates the
// validation objective (it must manage its own noise so repeated calls at
// identical parameters return identical values). Divergence (NaN loss)
// aborts with an exception; the last improving checkpoint is already on
// disk at that point.
TrainResult train_loop(ParamStore& params, const std::function<Tensor(long, double, Rng&)>& build_loss,
                       const std::function<double(double)>& val_loss, const TrainOptions& opt, Rng& rng);

}  // namespace hypervae
