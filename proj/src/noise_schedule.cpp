#include "featdiff/noise_schedule.hpp"

#include <cmath>

#include "featdiff/errors.hpp"

namespace featdiff {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ArgumentError("noise schedule needs at least one step");
  NoiseSchedule s;
  s.steps = static_cast<int>(betas.size());
  double prod = 1.0;
  for (std::size_t k = 0; k < betas.size(); ++k) {
    const double b = betas[k];
    if (!(b > 0.0 && b < 1.0)) throw ArgumentError("beta at step " + std::to_string(k + 1) + " is outside (0, 1)");
    const double prev = prod;
    prod *= 1.0 - b;
    s.alpha.push_back(1.0 - b);
    s.alpha_bar.push_back(prod);
    s.sigma.push_back(std::sqrt((1.0 - prev) / (1.0 - prod) * b));
  }
  s.beta = std::move(betas);
  return s;
}

torch::Tensor NoiseSchedule::alpha_bar_tensor() const {
  return torch::tensor(alpha_bar, torch::kFloat64);
}

NoiseSchedule make_schedule(int steps, ScheduleKind kind) {
  if (steps < 1) throw ArgumentError("diffusion needs K >= 1 steps, got " + std::to_string(steps));
  (void)kind;
  // Reference alpha_bar over the 1000-step linear schedule, with alpha_bar(0) = 1.
  std::vector<double> ref(kReferenceSteps + 1, 1.0);
  for (int i = 1; i <= kReferenceSteps; ++i) {
    const double b = kReferenceBetaStart +
                     (kReferenceBetaEnd - kReferenceBetaStart) * (i - 1) / static_cast<double>(kReferenceSteps - 1);
    ref[static_cast<std::size_t>(i)] = ref[static_cast<std::size_t>(i - 1)] * (1.0 - b);
  }
  auto ref_at = [&](double pos) {
    // Linear interpolation of log alpha_bar for K that does not divide 1000.
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min<std::size_t>(lo + 1, kReferenceSteps);
    const double w = pos - static_cast<double>(lo);
    return std::exp((1.0 - w) * std::log(ref[lo]) + w * std::log(ref[hi]));
  };
  std::vector<double> betas;
  const double stride = static_cast<double>(kReferenceSteps) / steps;
  for (int k = 1; k <= steps; ++k) {
    betas.push_back(1.0 - ref_at(k * stride) / ref_at((k - 1) * stride));
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

torch::Tensor forward_diffuse(const torch::Tensor& f0, const torch::Tensor& steps, const NoiseSchedule& schedule,
                              const torch::Tensor& noise) {
  if (!torch::isfinite(f0).all().item<bool>()) throw NumericError("forward diffusion input is not finite");
  const auto lo = steps.min().item<std::int64_t>();
  const auto hi = steps.max().item<std::int64_t>();
  if (lo < 1 || hi > schedule.steps) throw ArgumentError("diffusion step outside [1, K]");
  auto ab = schedule.alpha_bar_tensor().to(f0.scalar_type()).index_select(0, steps - 1);
  std::vector<std::int64_t> shape(static_cast<std::size_t>(f0.dim()), 1);
  shape[0] = -1;
  ab = ab.view(shape);
  return ab.sqrt() * f0 + (1.0 - ab).sqrt() * noise;
}

torch::Tensor forward_diffuse(const torch::Tensor& f0, int step, const NoiseSchedule& schedule,
                              const torch::Tensor& noise) {
  if (step < 1 || step > schedule.steps) throw ArgumentError("diffusion step outside [1, K]");
  if (!torch::isfinite(f0).all().item<bool>()) throw NumericError("forward diffusion input is not finite");
  const double ab = schedule.alpha_bar_at(step);
  return std::sqrt(ab) * f0 + std::sqrt(1.0 - ab) * noise;
}

}  // namespace featdiff
