#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "featdiff/calibration.hpp"
#include "featdiff/config.hpp"
#include "featdiff/feature_diffusion.hpp"
#include "featdiff/features.hpp"
#include "featdiff/incremental.hpp"
#include "featdiff/metrics.hpp"
#include "featdiff/ssl_pretrain.hpp"
#include "featdiff/synthetic.hpp"
#include "featdiff/task_stream.hpp"

namespace featdiff {

enum class ReplaySource { Diffusion, Gaussian, Real };

ReplaySource parse_replay_source(const std::string& name);
std::string to_string(ReplaySource source);

/// How the classifier side of the protocol runs. Several option sets can be
/// evaluated against the same extractor, stats and generators.
struct ProtocolOptions {
  ReplaySource source = ReplaySource::Diffusion;
  bool masked_baseline = false;
  int sampling_steps = 20;
  double guidance_scale = 1.0;
  std::int64_t per_class = 0;  // 0: real per-class count of the current phase
  ClassifierConfig classifier;

  static ProtocolOptions from_config(const ExperimentConfig& config);
};

/// One run directory:
///   config.txt, manifests.txt, metrics.tsv, accuracy.png, old_new.png
///   phase_<t>/  extractor.bin (t = 0), train_features.fdfc, test_features.fdfc,
///               stats.bin, generator.bin, replay.fdfc, classifier.bin, eval.tsv
/// Each finished stage leaves `<stage>.done` next to its output; with `resume`
/// a marked stage is loaded instead of recomputed.
class Experiment {
 public:
  Experiment(ExperimentConfig config, bool resume);

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path phase_dir(int t) const;
  /// T + 1
  int phase_count() const { return static_cast<int>(train_manifests_.size()); }
  const std::vector<PhaseManifest>& train_manifests() const { return train_manifests_; }
  const std::vector<PhaseManifest>& test_manifests() const { return test_manifests_; }
  /// Phase that introduced `class_id`.
  int phase_of(int class_id) const;

  const FrozenExtractor& extractor();
  const FeatureSet& train_features(int t);
  const FeatureSet& test_features(int t);
  const StatsTable& stats(int t);
  const GeneratorCheckpoint& generator(int t);

  /// Replay features for every class of phases < t.
  FeatureSet replay(int t, const ProtocolOptions& options);

  /// Trains and evaluates the classifier over all phases. With `persist`, the
  /// replay set, classifier and evaluation of each phase are stage outputs of
  /// this run directory.
  MetricsReport run_protocol(const ProtocolOptions& options, bool persist);

 private:
  bool done(int t, const std::string& stage) const;
  void mark(int t, const std::string& stage) const;
  void ensure_images();
  void ensure_features(int t);

  ExperimentConfig config_;
  std::filesystem::path root_;
  bool resume_;
  std::vector<PhaseManifest> train_manifests_;
  std::vector<PhaseManifest> test_manifests_;
  std::map<int, int> class_phase_;

  std::optional<ImageDataset> train_images_;
  std::optional<ImageDataset> test_images_;
  std::optional<FeatureSet> synthetic_train_;
  std::optional<FeatureSet> synthetic_test_;
  std::optional<FrozenExtractor> extractor_;
  std::map<int, FeatureSet> train_features_;
  std::map<int, FeatureSet> test_features_;
  std::map<int, StatsTable> stats_;
  std::map<int, GeneratorCheckpoint> generators_;
};

/// Full pipeline; writes metrics.tsv and the plots. A fresh run refuses a
/// directory that already holds a config; `resume` continues it.
MetricsReport run_experiment(const ExperimentConfig& config, bool resume);

/// Recomputes every metric of a finished run from its classifier checkpoints
/// and cached test features, and rewrites metrics.tsv.
MetricsReport evaluate_run(const std::filesystem::path& run_dir);

/// Writes accuracy.png and old_new.png next to metrics.tsv.
void emit_plots(const std::filesystem::path& run_dir);

/// Generator-quality check on a low-dimensional distribution with known shape.
struct ShapeOracleOptions {
  SyntheticKind kind = SyntheticKind::Banana;
  int dim = 2;
  std::int64_t train_count = 50000;
  std::int64_t eval_count = 2000;
  DiffusionConfig diffusion;
  std::vector<std::int64_t> unet_widths{32, 32, 64, 64, 128};
  std::uint64_t seed = 0;
};

struct ShapeOracleResult {
  MmdResult generated;  // generator samples vs held-out real
  MmdResult gaussian;   // prototype baseline vs held-out real
  torch::Tensor held_out;
  torch::Tensor generated_samples;
  torch::Tensor gaussian_samples;
};

ShapeOracleResult run_shape_oracle(const ShapeOracleOptions& options);

}  // namespace featdiff
