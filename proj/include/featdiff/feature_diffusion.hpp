#pragma once

#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "featdiff/features.hpp"
#include "featdiff/noise_schedule.hpp"
#include "featdiff/unet1d.hpp"

namespace featdiff {

struct DiffusionConfig {
  int steps = 20;
  int sampling_steps = 20;
  std::int64_t iterations = 100000;
  std::int64_t batch_size = 64;
  double lr = 8e-5;
  double ema_decay = 0.995;
  double cond_drop_prob = 0.1;
  double guidance_scale = 1.0;
  std::uint64_t seed = 0;
  /// Iterations per entry of the loss log (moving average).
  std::int64_t log_every = 100;

  void validate() const;
};

/// Combined noise prediction: eps_uncond + scale * (eps_cond - eps_uncond).
/// Scale 1 returns eps_cond and scale 0 returns eps_uncond exactly.
torch::Tensor cfg_combine(const torch::Tensor& eps_uncond, const torch::Tensor& eps_cond, double scale);

/// A trained per-phase generator. Holds the EMA weights only.
struct GeneratorCheckpoint {
  int phase = 0;
  std::int64_t feature_dim = 0;
  std::vector<int> classes;  // conditioned class ids, in conditioning order
  NoiseSchedule schedule;
  UNet1DConfig unet_config;
  double guidance_scale = 1.0;
  bool ema = true;
  UNet1D net{nullptr};
  std::vector<double> loss_log;

  /// Conditioning index of `class_id`; throws ArgumentError if it is unknown.
  std::int64_t condition_index(int class_id) const;
  std::int64_t null_condition() const { return static_cast<std::int64_t>(classes.size()); }

  void save(const std::filesystem::path& path) const;
  static GeneratorCheckpoint load(const std::filesystem::path& path);
};

/// UNet1DConfig sized for `feature_dim` and `num_classes`.
UNet1DConfig unet_config_for(std::int64_t feature_dim, std::int64_t num_classes, bool doubled,
                             const std::vector<std::int64_t>& base_widths = {32, 32, 64, 64, 128});

/// Trains an epsilon-prediction DDPM on (calibrated) features of every class
/// present in `features`, with random condition dropout for classifier-free
/// guidance, and returns the EMA copy.
GeneratorCheckpoint train_generator(const FeatureSet& features, const NoiseSchedule& schedule,
                                    const UNet1DConfig& unet_config, const DiffusionConfig& config, int phase);

/// Draws `count` feature vectors of `class_id` in the normalized space.
/// steps == K runs the ancestral chain (no noise on the last step); fewer
/// steps use the deterministic skipping update over evenly spaced steps.
torch::Tensor sample_features(const GeneratorCheckpoint& generator, int class_id, std::int64_t count, int steps,
                              double scale, std::uint64_t seed);

/// Zero-pads [N, d] to [N, 1, padded] and back.
torch::Tensor pad_features(const torch::Tensor& features, std::int64_t padded_length);
torch::Tensor unpad_features(const torch::Tensor& sequences, std::int64_t feature_dim);

}  // namespace featdiff
