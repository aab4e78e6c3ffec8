#pragma once

#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "featdiff/calibration.hpp"
#include "featdiff/features.hpp"

namespace featdiff {

enum class SyntheticKind { Isotropic, Anisotropic, Banana, Mixture };

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string to_string(SyntheticKind kind);

/// Parameters of one class. Samples are mean + scale * w, where w is a
/// standard draw shaped by the kind:
///   isotropic / anisotropic: w ~ N(0, I) (isotropic uses scale[0] everywhere)
///   banana: z ~ N(0, I), w = z with w[1] = z[1] + warp * z[0]^2
///   mixture: w = z + spread * u_k, u_k the k-th of `components` unit
///            directions in the first two coordinates, k uniform.
struct SyntheticClass {
  std::vector<double> mean;
  std::vector<double> scale;
  double warp = 1.0;
  int components = 3;
  double spread = 3.0;
};

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::Isotropic;
  int dim = 2;
  std::vector<SyntheticClass> classes;
  std::int64_t per_class = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// A spec with `num_classes` classes whose means sit 6 apart along a ring and
/// whose scales are mildly unequal across dimensions.
SyntheticSpec default_synthetic_spec(SyntheticKind kind, int dim, int num_classes, std::int64_t per_class,
                                     std::uint64_t seed);

/// Labeled draws, `per_class` rows per class, labels 0..n-1. Deterministic in
/// spec.seed.
FeatureSet sample_synthetic(const SyntheticSpec& spec);

struct MmdResult {
  double estimate = 0.0;        // unbiased MMD^2, may be slightly negative
  double standard_error = 0.0;  // first-order (delta method)
  double bandwidth = 0.0;
};

/// Median pairwise distance of the pooled sample (at most 1000 points,
/// evenly strided).
double median_heuristic_bandwidth(const torch::Tensor& a, const torch::Tensor& b);

/// Unbiased Gaussian-kernel MMD^2 between [m, d] and [n, d] samples with
/// k(x, y) = exp(-|x - y|^2 / (2 h^2)). mmd(a, b) == mmd(b, a) exactly.
MmdResult mmd(const torch::Tensor& a, const torch::Tensor& b, std::optional<double> bandwidth = std::nullopt);

/// n draws from N(mean, diag(std^2)) of `stats`.
torch::Tensor gaussian_prototype_baseline(const ClassStats& stats, std::int64_t n, std::uint64_t seed);

}  // namespace featdiff
