#pragma once

#include <filesystem>
#include <map>

#include <torch/torch.h>

#include "featdiff/features.hpp"

namespace featdiff {

inline constexpr double kStdFloor = 1e-5;

/// Per-dimension mean and (population) standard deviation of one class.
struct ClassStats {
  int class_id = -1;
  torch::Tensor mean;  // [d] float64
  torch::Tensor std;   // [d] float64, every entry >= kStdFloor
  std::int64_t count = 0;

  std::int64_t dim() const { return mean.numel(); }
};

using StatsTable = std::map<int, ClassStats>;

/// `features` are the [n, d] rows of class `class_id`; n must be at least 2.
/// Dimensions with std below the floor are clamped and reported once.
ClassStats compute_stats(int class_id, const torch::Tensor& features);

/// Stats for every class present in `set`.
StatsTable compute_stats(const FeatureSet& set);

/// (f - m_c) / s_c for rows of one class.
torch::Tensor normalize_by_class(const torch::Tensor& features, const ClassStats& stats);
/// f * s_c + m_c.
torch::Tensor denormalize_by_class(const torch::Tensor& normalized, const ClassStats& stats);

/// Row-wise versions that look up each row's label in `table`. A label with
/// no entry in the table is an ArgumentError.
FeatureSet normalize_by_class(const FeatureSet& set, const StatsTable& table);
FeatureSet denormalize_by_class(const FeatureSet& set, const StatsTable& table);

/// Stats file: "FDST", u32 version, u32 d, u32 class count, then per class
/// i32 id, u64 count, d float32 means, d float32 stds. Little-endian.
void save_stats(const std::filesystem::path& path, const StatsTable& table);
StatsTable load_stats(const std::filesystem::path& path);

}  // namespace featdiff
