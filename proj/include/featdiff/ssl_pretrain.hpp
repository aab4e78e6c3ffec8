#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "featdiff/backbone.hpp"
#include "featdiff/features.hpp"
#include "featdiff/task_stream.hpp"

namespace featdiff {

struct ExtractorConfig {
  std::string backbone = "resnet18";
  std::int64_t feature_dim = 512;
  int epochs = 100;
  std::int64_t batch_size = 32;
  double initial_lr = 0.1;
  double lambda = 5.0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  /// Projector/predictor width; 0 means feature_dim.
  std::int64_t head_hidden = 0;
  std::uint64_t seed = 1993;

  void validate() const;
};

/// Heads used only while pretraining: the 4N-way rotation classifier and the
/// Siamese projector/predictor pair. Discarded once the extractor is frozen.
struct SiameseHeadsImpl : torch::nn::Module {
  SiameseHeadsImpl(std::int64_t feature_dim, std::int64_t initial_classes, std::int64_t hidden);

  torch::nn::Linear classifier{nullptr};
  torch::nn::Sequential projector{nullptr};
  torch::nn::Sequential predictor{nullptr};
};
TORCH_MODULE(SiameseHeads);

inline std::int64_t extended_label(std::int64_t label, int rotation) { return 4 * label + rotation; }
inline std::pair<std::int64_t, int> split_extended_label(std::int64_t extended) {
  return {extended / 4, static_cast<int>(extended % 4)};
}

/// Rotates a square image ([C, H, W]) by rotation * 90 degrees and returns it
/// with the extended label 4 * label + rotation.
std::pair<torch::Tensor, std::int64_t> rotate_augment(const torch::Tensor& image, std::int64_t label, int rotation);

/// Batched rotation of [B, C, H, W] images.
torch::Tensor rotate_images(const torch::Tensor& images, int rotation);

/// Mean cross-entropy over the extended label space.
torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& extended_labels);

/// Mean of 1 - cos(z_rotated, stopgrad(z_reference)) over the batch. The
/// reference is detached here, so no gradient ever reaches its branch.
torch::Tensor ssl_loss(const torch::Tensor& z_rotated, const torch::Tensor& z_reference);

torch::Tensor combined_loss(const torch::Tensor& ce, const torch::Tensor& ssl, double lambda);
double combined_loss(double ce, double ssl, double lambda);

inline constexpr double kCosineEpsilon = 1e-8;

/// Read-only feature extractor. Parameters have requires_grad off and the
/// network stays in eval mode, so concurrent `extract` calls are safe.
class FrozenExtractor {
 public:
  FrozenExtractor() = default;
  FrozenExtractor(std::shared_ptr<FeatureBackbone> net, std::uint64_t seed);

  std::int64_t feature_dim() const { return net_->feature_dim(); }
  std::string backbone_id() const { return net_->id(); }
  std::uint64_t seed() const { return seed_; }
  bool valid() const { return net_ != nullptr; }

  /// Features for a batch of normalized images.
  torch::Tensor extract(const torch::Tensor& images) const;

  /// Header (backbone id, d, seed) followed by the serialized weights.
  void save(const std::filesystem::path& path) const;
  static FrozenExtractor load(const std::filesystem::path& path);

 private:
  std::shared_ptr<FeatureBackbone> net_;
  std::uint64_t seed_ = 0;
};

struct TrainedExtractor {
  FrozenExtractor extractor;
  std::vector<double> epoch_losses;  // mean combined loss per epoch
};

/// Phase-0 training with rotation label augmentation and Siamese
/// self-supervision; returns the frozen extractor, the heads are dropped.
TrainedExtractor train_extractor(const ExtractorConfig& config, PhaseStream& phase0, std::int64_t initial_classes);

/// Runs every sample of `stream` (normalization only) through the extractor.
FeatureSet extract_features(const FrozenExtractor& extractor, const ImageDataset& remapped,
                            const PhaseManifest& manifest, const AugmentationPolicy& policy,
                            std::int64_t expected_dim = 0);

}  // namespace featdiff
