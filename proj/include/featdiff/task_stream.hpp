#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace featdiff {

enum class Split { Train, Test };

std::string to_string(Split split);

/// Seeded permutation of the original class indices. `permutation[k]` is the
/// original class that receives remapped id k.
struct ClassOrdering {
  std::uint64_t seed = 0;
  std::vector<int> permutation;

  static ClassOrdering make(int num_classes, std::uint64_t seed);
  static ClassOrdering identity(int num_classes);

  /// original class -> remapped id
  std::vector<int> inverse() const;
};

struct PhaseManifest {
  int phase = 0;
  std::vector<int> classes;           // remapped ids, ascending
  std::vector<int> original_classes;  // dataset class of each entry in `classes`
  Split split = Split::Train;
  std::int64_t sample_count = 0;
};

/// Partitions `num_classes` into an initial phase of `initial_count` classes and
/// `phases` equally sized incremental phases. Remapped ids are contiguous, so
/// phase t owns a consecutive id range; `seed` fixes which original classes
/// land where.
std::vector<PhaseManifest> build_phase_splits(int num_classes, int initial_count, int phases,
                                              std::uint64_t seed);

/// Structured-text audit record, one line per phase.
void write_manifests(const std::filesystem::path& path, const std::vector<PhaseManifest>& manifests);
std::vector<PhaseManifest> read_manifests(const std::filesystem::path& path);

/// Decoded images in memory. Labels are original dataset classes until
/// `remap` is applied.
struct ImageDataset {
  torch::Tensor images;  // [N, C, H, W] uint8
  torch::Tensor labels;  // [N] int64
  int num_classes = 0;

  std::int64_t size() const { return images.defined() ? images.size(0) : 0; }
  ImageDataset remap(const ClassOrdering& ordering) const;
  /// Keeps at most `per_class` samples of each class (first occurrences).
  ImageDataset subsample(std::int64_t per_class) const;
};

/// CIFAR-10 / CIFAR-100 binary distributions. The first load decodes the
/// batches and caches the tensors under `root`.
ImageDataset load_cifar10(const std::filesystem::path& root, Split split);
ImageDataset load_cifar100(const std::filesystem::path& root, Split split);

struct AugmentationPolicy {
  bool horizontal_flip = true;
  bool random_crop = true;
  int crop_padding = 4;
  std::array<float, 3> mean{0.5071f, 0.4865f, 0.4409f};
  std::array<float, 3> stddev{0.2673f, 0.2564f, 0.2762f};
  /// Color jitter plus cutout.
  bool enhanced = false;
  int cutout_size = 8;

  /// Normalization only.
  AugmentationPolicy evaluation() const;
};

/// Maps uint8 images to normalized float tensors; no randomness.
torch::Tensor normalize_images(const torch::Tensor& images_u8, const AugmentationPolicy& policy);

/// Applies the stochastic part of `policy` to uint8 images and normalizes.
torch::Tensor augment_images(const torch::Tensor& images_u8, const AugmentationPolicy& policy,
                             std::mt19937_64& rng);

struct Batch {
  torch::Tensor images;  // [B, C, H, W] float32, normalized
  torch::Tensor labels;  // [B] int64 remapped ids
  torch::Tensor raw;     // [B, C, H, W] uint8, before augmentation
};

/// Epoch-wise batch stream over the samples of one phase. Train streams
/// shuffle and augment; test streams keep dataset order and only normalize.
class PhaseStream {
 public:
  PhaseStream(const ImageDataset& remapped, const PhaseManifest& manifest, AugmentationPolicy policy,
              std::int64_t batch_size, std::uint64_t seed);

  void start_epoch();
  std::optional<Batch> next();

  std::int64_t sample_count() const { return static_cast<std::int64_t>(indices_.size()); }
  std::int64_t batches_per_epoch() const;
  Split split() const { return split_; }
  /// Another independent view of `raw` under this stream's policy and RNG.
  torch::Tensor augment(const torch::Tensor& raw);
  /// Raw (uint8) images and labels of the phase, in dataset order.
  const torch::Tensor& images() const { return images_; }
  const torch::Tensor& labels() const { return labels_; }

 private:
  torch::Tensor images_;
  torch::Tensor labels_;
  std::vector<std::int64_t> indices_;
  std::vector<std::int64_t> order_;
  std::size_t cursor_ = 0;
  AugmentationPolicy policy_;
  std::int64_t batch_size_;
  Split split_;
  std::mt19937_64 rng_;
};

}  // namespace featdiff
