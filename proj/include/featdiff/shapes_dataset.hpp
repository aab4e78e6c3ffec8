#pragma once

#include <cstdint>

#include "featdiff/task_stream.hpp"

namespace featdiff {

/// Procedurally rendered 10-class 32x32 RGB dataset used for desk-scale
/// experiments when no natural-image dataset is available. Each class is a
/// shape family; within a class, images vary in position, size, tilt, color
/// scheme (light-on-dark or dark-on-light), clutter and pixel noise.
struct ShapesConfig {
  std::int64_t per_class = 500;
  int image_size = 32;
  double noise = 0.08;
  int clutter = 2;
  double min_radius = 6.0;
  double max_radius = 11.0;
  double max_shift = 5.0;
  double max_tilt_deg = 20.0;
};

inline constexpr int kShapesClasses = 10;

ImageDataset make_shapes10(const ShapesConfig& config, Split split, std::uint64_t seed);

}  // namespace featdiff
