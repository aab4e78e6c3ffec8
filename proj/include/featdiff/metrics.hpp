#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace featdiff {

/// Lower-triangular accuracy table: at(t, j) is the accuracy (percent) on the
/// test classes of task j after training phase t, defined for j <= t.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(int phases);

  int phases() const { return static_cast<int>(rows_.size()); }
  void set(int t, int j, double accuracy);
  bool has(int t, int j) const;
  double at(int t, int j) const;

  /// Overall accuracy after phase t on every class seen so far.
  void set_overall(int t, double accuracy);
  double overall(int t) const;
  bool has_overall(int t) const;

 private:
  void check(int t, int j) const;
  std::vector<std::vector<std::optional<double>>> rows_;
  std::vector<std::optional<double>> overall_;
};

/// Mean of the per-phase overall accuracies a_0..a_{T}.
double average_incremental_accuracy(const std::vector<double>& phase_accuracy);

/// Drop on task j after phase t relative to its best earlier value:
/// max_{i in [j, t-1]} at(i, j) - at(t, j). Requires j < t. Can be negative.
double forgetting_of_task(const AccuracyMatrix& m, int t, int j);

/// Mean forgetting over the tasks j < t after phase t (t >= 1).
double phase_forgetting(const AccuracyMatrix& m, int t);

/// Mean of phase_forgetting over t = 1..T; T = 0 is an ArgumentError.
double average_forgetting(const AccuracyMatrix& m);

/// A finished run's numbers, as written to metrics.tsv.
struct MetricsReport {
  AccuracyMatrix matrix;
  std::vector<double> phase_accuracy;  // a_t
  std::vector<double> phase_forgetting;  // F_t; entry 0 is unused (0)
  double average_accuracy = 0.0;
  double average_forgetting = 0.0;
  /// Test samples per task; optional, enables count-weighted old/new views.
  std::vector<std::int64_t> task_samples;
};

/// Builds the summary numbers from a complete matrix.
MetricsReport summarize(const AccuracyMatrix& m);

/// Tab-separated: a header, one row per phase (phase, a_t, F_t, task_0..),
/// then `# average_accuracy`, `# average_forgetting` and (when known)
/// `# task_samples` lines.
void write_report(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_report(const std::filesystem::path& path);

/// Accuracy after phase t on the classes of tasks [first, last], weighted by
/// task sample counts when the report has them.
double task_range_accuracy(const MetricsReport& report, int t, int first, int last);

}  // namespace featdiff
