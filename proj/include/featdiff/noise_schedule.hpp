#pragma once

#include <vector>

#include <torch/torch.h>

namespace featdiff {

enum class ScheduleKind { Linear };

/// beta/alpha/alpha_bar/sigma for steps 1..K. Vectors are 0-based: entry k-1
/// holds step k. alpha_bar before the first step is 1.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;  // posterior std, sqrt of beta_tilde

  /// Derives every other sequence from beta; throws unless each beta is in (0, 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  double alpha_bar_at(int step) const { return step <= 0 ? 1.0 : alpha_bar.at(static_cast<std::size_t>(step - 1)); }
  torch::Tensor alpha_bar_tensor() const;
};

inline constexpr double kReferenceBetaStart = 1e-4;
inline constexpr double kReferenceBetaEnd = 2e-2;
inline constexpr int kReferenceSteps = 1000;

/// Linear schedule: the 1000-step reference range [1e-4, 2e-2] compressed to
/// K steps so that alpha_bar follows the reference at every 1000/K-th step.
NoiseSchedule make_schedule(int steps, ScheduleKind kind = ScheduleKind::Linear);

/// f_k = sqrt(alpha_bar_k) f_0 + sqrt(1 - alpha_bar_k) eps. `steps` is a
/// [B] int64 tensor of 1-based steps (or a single step broadcast).
torch::Tensor forward_diffuse(const torch::Tensor& f0, const torch::Tensor& steps, const NoiseSchedule& schedule,
                              const torch::Tensor& noise);
torch::Tensor forward_diffuse(const torch::Tensor& f0, int step, const NoiseSchedule& schedule,
                              const torch::Tensor& noise);

}  // namespace featdiff
