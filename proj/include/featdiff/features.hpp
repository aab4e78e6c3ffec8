#pragma once

#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace featdiff {

/// A batch of feature records: row i of `features` carries class `labels[i]`.
struct FeatureSet {
  torch::Tensor features;  // [N, d] float32
  torch::Tensor labels;    // [N] int64
  int phase = -1;

  std::int64_t size() const { return features.defined() ? features.size(0) : 0; }
  std::int64_t dim() const { return features.defined() ? features.size(1) : 0; }

  /// Rows whose label equals `class_id`.
  torch::Tensor of_class(int class_id) const;
  /// Sorted distinct labels present in the set.
  std::vector<int> classes() const;
  /// Per-class row counts, indexed like `classes()`.
  std::vector<std::int64_t> class_counts() const;
};

FeatureSet concat(const std::vector<FeatureSet>& parts);

/// Feature cache format: "FDFC", u32 d, u64 record count, then per record an
/// i32 label followed by d float32 values. Everything little-endian.
void save_feature_cache(const std::filesystem::path& path, const FeatureSet& set);
FeatureSet load_feature_cache(const std::filesystem::path& path);

}  // namespace featdiff
