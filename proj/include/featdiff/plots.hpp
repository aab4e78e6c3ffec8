#pragma once

#include <filesystem>

#include "featdiff/metrics.hpp"

namespace featdiff {

/// a_t against phase, one marker per phase.
void plot_accuracy_curve(const MetricsReport& report, const std::filesystem::path& path);

/// Total, old-class and new-class accuracy against phase. Old classes are the
/// tasks before t, new ones task t; phase 0 has no old point.
void plot_old_new_curves(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace featdiff
