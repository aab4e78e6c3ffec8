#pragma once

#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "featdiff/features.hpp"

namespace featdiff {

struct ClassifierConfig {
  int epochs = 20;
  std::int64_t batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// The unified linear head over every class registered so far. Row i of
/// `weight` scores class `classes[i]`.
struct ClassifierState {
  torch::Tensor weight;  // [n, d] float32
  torch::Tensor bias;    // [n] float32
  int phase = -1;
  std::vector<int> classes;

  std::int64_t dim() const { return weight.size(1); }
  std::size_t num_classes() const { return classes.size(); }
  /// Row index of `class_id`, or -1.
  std::int64_t row_of(int class_id) const;

  void save(const std::filesystem::path& path) const;
  static ClassifierState load(const std::filesystem::path& path);
};

/// A head with no classes yet.
ClassifierState make_classifier(std::int64_t feature_dim);

inline constexpr double kNewRowInitStd = 0.01;

/// Appends one row per new class, drawn from N(0, 0.01^2); existing rows are
/// copied unchanged. Duplicate ids (within `new_ids` or against the registry)
/// are an ArgumentError.
ClassifierState extend_classifier(const ClassifierState& state, const std::vector<int>& new_ids, std::uint64_t seed);

struct ReplayEntry {
  int class_id = -1;
  std::int64_t count = 0;
  int source_phase = -1;  // phase whose generator models this class
};

struct ReplayPlan {
  std::vector<ReplayEntry> entries;

  /// Every class in `old_classes` must have exactly one entry.
  void validate(const std::vector<int>& old_classes) const;
  std::int64_t total() const;
};

/// Cross-entropy training over real new-class features and replayed old-class
/// features, shuffled together, SGD with a per-epoch cosine-annealed lr.
/// Every registered class that is absent from `real` must appear in `replay`.
ClassifierState train_phase(ClassifierState state, const FeatureSet& real, const FeatureSet& replay,
                            const ClassifierConfig& config);

/// No-replay baseline: trains on `real` only with the softmax restricted to the
/// logits of the classes present in `real`. Other rows receive no gradient.
ClassifierState train_phase_masked_baseline(ClassifierState state, const FeatureSet& real,
                                            const ClassifierConfig& config);

struct Prediction {
  torch::Tensor classes;  // [N] int64 class ids
  torch::Tensor logits;   // [N, n]
};

/// Argmax over all registered classes; ties go to the lowest class id.
Prediction predict(const ClassifierState& state, const torch::Tensor& features);

/// Accuracy (percent) of `state` on `test`, overall and per task.
struct PhaseEvaluation {
  double overall = 0.0;
  std::vector<double> per_task;
  std::vector<std::int64_t> task_counts;
};

PhaseEvaluation evaluate_phase(const ClassifierState& state, const FeatureSet& test,
                               const std::vector<std::vector<int>>& task_classes);

}  // namespace featdiff
