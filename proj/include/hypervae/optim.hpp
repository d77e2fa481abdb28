#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hypervae/nn.hpp"

namespace hypervae {

// Adam with bias correction. Moment buffers are laid out in parameter-store
// order; learning rate is read fresh on every step so a schedule can adjust
// it between steps.
class Adam {
 public:
  struct Config {
    double lr = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam(ParamStore& params, Config cfg) : params_(&params), cfg_(cfg) {
    if (cfg_.lr <= 0.0) throw std::invalid_argument("Adam: learning rate must be positive");
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params.items()[i].second.numel(), 0.0);
      v_[i].assign(params.items()[i].second.numel(), 0.0);
    }
  }

  long step_count() const { return t_; }
  double learning_rate() const { return cfg_.lr; }
  void set_learning_rate(double lr) {
    if (lr <= 0.0) throw std::invalid_argument("Adam: learning rate must be positive");
    cfg_.lr = lr;
  }

  // One update over all tracked parameters; zeroes gradients afterwards.
  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_->size(); ++pi) {
      Tensor& p = params_->items()[pi].second;
      if (!p.has_grad())
        throw std::runtime_error("Adam: missing gradient for parameter " + params_->items()[pi].first);
      const auto& g = p.grad();
      auto& data = p.mutable_data();
      auto& m = m_[pi];
      auto& v = v_[pi];
      const std::size_t n = data.size();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
      p.zero_grad();
    }
  }

 private:
  ParamStore* params_;
  Config cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Reduce-on-plateau learning-rate schedule: after `patience` consecutive
// updates without the validation loss improving on the best seen value by
// more than `min_delta`, multiply the rate by `factor`.
class PlateauSchedule {
 public:
  PlateauSchedule(double initial_lr, double factor = 0.5, long patience = 2000, double min_delta = 1e-4)
      : lr_(initial_lr), factor_(factor), patience_(patience), min_delta_(min_delta) {
    if (factor <= 0.0 || factor >= 1.0) throw std::invalid_argument("PlateauSchedule: factor must be in (0,1)");
    if (initial_lr <= 0.0) throw std::invalid_argument("PlateauSchedule: learning rate must be positive");
  }

  // Feed the current validation loss (once per training iteration); returns
  // the learning rate to use next.
  double update(double validation_loss) {
    if (std::isnan(validation_loss)) throw std::runtime_error("PlateauSchedule: validation loss is NaN");
    if (validation_loss < best_ - min_delta_) {
      best_ = validation_loss;
      since_improvement_ = 0;
    } else {
      ++since_improvement_;
      if (since_improvement_ >= patience_) {
        lr_ *= factor_;
        since_improvement_ = 0;
      }
    }
    return lr_;
  }

  double learning_rate() const { return lr_; }
  double best_loss() const { return best_; }
  long iterations_since_improvement() const { return since_improvement_; }

 private:
  double lr_;
  double factor_;
  long patience_;
  double min_delta_;
  double best_ = 1e300;
  long since_improvement_ = 0;
};

}  // namespace hypervae
