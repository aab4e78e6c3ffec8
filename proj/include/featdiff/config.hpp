#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "featdiff/feature_diffusion.hpp"
#include "featdiff/incremental.hpp"
#include "featdiff/shapes_dataset.hpp"
#include "featdiff/ssl_pretrain.hpp"

namespace featdiff {

/// Everything a run needs. Serialized as flat `key = value` lines with dotted
/// keys; doubles are written with 17 significant digits so the file format
/// round-trips exactly.
struct ExperimentConfig {
  /// cifar10 | cifar100 | shapes10 | synthetic
  std::string dataset = "cifar100";
  std::string data_root = "data";
  int initial_classes = 50;
  int phases = 5;
  std::uint64_t order_seed = 1993;
  /// Per-class caps applied after loading; 0 keeps everything.
  std::int64_t train_per_class = 0;
  std::int64_t test_per_class = 0;

  ShapesConfig shapes;
  std::uint64_t shapes_seed = 7;

  std::string synthetic_kind = "anisotropic";
  int synthetic_dim = 16;
  int synthetic_classes = 10;
  std::int64_t synthetic_train_per_class = 500;
  std::int64_t synthetic_test_per_class = 200;
  std::uint64_t synthetic_seed = 11;

  ExtractorConfig extractor;
  AugmentationPolicy augmentation;

  DiffusionConfig diffusion;
  std::vector<std::int64_t> unet_widths{32, 32, 64, 64, 128};
  /// The phase-0 generator models many more classes and gets doubled widths.
  bool unet_double_initial = true;

  ClassifierConfig classifier;
  /// diffusion | gaussian | real
  std::string replay_source = "diffusion";
  /// Generated features per old class; 0 matches the real per-class count of
  /// the current phase.
  std::int64_t replay_per_class = 0;
  /// replay | masked
  std::string baseline = "replay";

  std::string output_dir = "runs/default";

  int num_classes() const;
  void validate() const;

  std::string to_text() const;
  static ExperimentConfig from_text(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Sets one key from its textual value; unknown keys and malformed values
  /// are ConfigErrors.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();
};

}  // namespace featdiff
