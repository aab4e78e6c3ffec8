#pragma once

#include <cmath>
#include <numbers>

#include <torch/torch.h>

namespace featdiff {

/// lr(step) = eta_min + (base - eta_min) * (1 + cos(pi * step / t_max)) / 2
class CosineAnnealingLr {
 public:
  CosineAnnealingLr(double base_lr, long t_max, double eta_min = 0.0)
      : base_(base_lr), eta_min_(eta_min), t_max_(t_max < 1 ? 1 : t_max) {}

  double at(long step) const {
    if (step >= t_max_) return eta_min_;
    return eta_min_ + (base_ - eta_min_) * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                                           static_cast<double>(t_max_))) / 2.0;
  }

  template <typename Optimizer, typename Options>
  void apply(Optimizer& opt, long step) const {
    const double lr = at(step);
    for (auto& group : opt.param_groups()) static_cast<Options&>(group.options()).lr(lr);
  }

 private:
  double base_;
  double eta_min_;
  long t_max_;
};

}  // namespace featdiff
