#include "hypervae/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "hypervae/checkpoint.hpp"

namespace hypervae {

TrainResult train_loop(ParamStore& params, const std::function<Tensor(long, double, Rng&)>& build_loss,
                       const std::function<double(double)>& val_loss, const TrainOptions& opt, Rng& rng) {
  Adam adam(params, {.lr = opt.lr, .beta1 = opt.adam_beta1, .beta2 = opt.adam_beta2, .epsilon = opt.adam_epsilon});
  PlateauSchedule sched(opt.lr, opt.plateau_factor, opt.plateau_patience, opt.plateau_min_delta);

  std::ofstream log;
  if (!opt.log_path.empty()) {
    log.open(opt.log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot open training log: " + opt.log_path);
    log << "iteration,train_loss,val_loss,lr\n";
  }
  char row[160];

  TrainResult res;
  double best_val = 1e300;
  double current_val = val_loss(opt.kl_weight);
  double train_loss_value = 0.0;

  for (long it = 0; it < opt.max_iterations; ++it) {
    const double beta = opt.kl_warmup_iters > 0
                            ? opt.kl_weight * std::min(1.0, static_cast<double>(it) / opt.kl_warmup_iters)
                            : opt.kl_weight;
    params.zero_grads();
    Tensor loss = build_loss(it, beta, rng);
    train_loss_value = loss.value();
    if (std::isnan(train_loss_value))
      throw std::runtime_error("training diverged (NaN loss) at iteration " + std::to_string(it) +
                               (opt.checkpoint_path.empty() ? "" : "; last good checkpoint: " + opt.checkpoint_path));
    loss.backward();
    adam.set_learning_rate(sched.learning_rate());
    adam.step();

    if ((it + 1) % opt.val_interval == 0 || it + 1 == opt.max_iterations) {
      current_val = val_loss(opt.kl_weight);
      if (std::isnan(current_val))
        throw std::runtime_error("validation loss is NaN at iteration " + std::to_string(it));
      if (current_val < best_val) {
        best_val = current_val;
        if (!opt.checkpoint_path.empty()) save_checkpoint(params, opt.checkpoint_path);
      }
      if (log) {
        std::snprintf(row, sizeof row, "%ld,%.17g,%.17g,%.17g\n", it + 1, train_loss_value, current_val,
                      sched.learning_rate());
        log << row;
      }
    }
    sched.update(current_val);
    res.iterations = it + 1;
    if (sched.learning_rate() < opt.lr_stop) break;
  }
  res.best_val_loss = best_val;
  res.final_val_loss = current_val;
  res.final_lr = sched.learning_rate();
  if (!opt.checkpoint_path.empty() && best_val == 1e300) save_checkpoint(params, opt.checkpoint_path);
  return res;
}

}  // namespace hypervae
