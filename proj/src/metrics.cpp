#include "featdiff/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "featdiff/errors.hpp"

namespace featdiff {

AccuracyMatrix::AccuracyMatrix(int phases) {
  if (phases < 1) throw ArgumentError("accuracy matrix needs at least one phase");
  rows_.resize(static_cast<std::size_t>(phases));
  for (int t = 0; t < phases; ++t) rows_[static_cast<std::size_t>(t)].resize(static_cast<std::size_t>(t + 1));
  overall_.resize(static_cast<std::size_t>(phases));
}

void AccuracyMatrix::check(int t, int j) const {
  if (t < 0 || t >= phases() || j < 0 || j > t) {
    throw ArgumentError("accuracy entry (" + std::to_string(t) + ", " + std::to_string(j) + ") out of range");
  }
}

void AccuracyMatrix::set(int t, int j, double accuracy) {
  check(t, j);
  rows_[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)] = accuracy;
}

bool AccuracyMatrix::has(int t, int j) const {
  check(t, j);
  return rows_[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)].has_value();
}

double AccuracyMatrix::at(int t, int j) const {
  check(t, j);
  const auto& v = rows_[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)];
  if (!v) throw ArgumentError("accuracy entry (" + std::to_string(t) + ", " + std::to_string(j) + ") is missing");
  return *v;
}

void AccuracyMatrix::set_overall(int t, double accuracy) {
  check(t, 0);
  overall_[static_cast<std::size_t>(t)] = accuracy;
}

bool AccuracyMatrix::has_overall(int t) const {
  check(t, 0);
  return overall_[static_cast<std::size_t>(t)].has_value();
}

double AccuracyMatrix::overall(int t) const {
  check(t, 0);
  const auto& v = overall_[static_cast<std::size_t>(t)];
  if (!v) throw ArgumentError("overall accuracy of phase " + std::to_string(t) + " is missing");
  return *v;
}

double average_incremental_accuracy(const std::vector<double>& phase_accuracy) {
  if (phase_accuracy.empty()) throw ArgumentError("no phase accuracies to average");
  return std::accumulate(phase_accuracy.begin(), phase_accuracy.end(), 0.0) /
         static_cast<double>(phase_accuracy.size());
}

double forgetting_of_task(const AccuracyMatrix& m, int t, int j) {
  if (j >= t) throw ArgumentError("forgetting needs an earlier task (j < t)");
  double best = m.at(j, j);
  for (int i = j + 1; i < t; ++i) best = std::max(best, m.at(i, j));
  return best - m.at(t, j);
}

double phase_forgetting(const AccuracyMatrix& m, int t) {
  if (t < 1) throw ArgumentError("forgetting is undefined after the first phase");
  double sum = 0.0;
  for (int j = 0; j < t; ++j) sum += forgetting_of_task(m, t, j);
  return sum / t;
}

double average_forgetting(const AccuracyMatrix& m) {
  const int last = m.phases() - 1;
  if (last < 1) throw ArgumentError("average forgetting needs at least one incremental phase");
  double sum = 0.0;
  for (int t = 1; t <= last; ++t) sum += phase_forgetting(m, t);
  return sum / last;
}

MetricsReport summarize(const AccuracyMatrix& m) {
  MetricsReport r;
  r.matrix = m;
  for (int t = 0; t < m.phases(); ++t) {
    r.phase_accuracy.push_back(m.overall(t));
    r.phase_forgetting.push_back(t == 0 ? 0.0 : phase_forgetting(m, t));
  }
  r.average_accuracy = average_incremental_accuracy(r.phase_accuracy);
  r.average_forgetting = m.phases() > 1 ? average_forgetting(m) : 0.0;
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double parse_double(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("malformed number '" + s + "' in " + path.string());
  }
}

}  // namespace

void write_report(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write metrics report " + path.string());
  const int n = report.matrix.phases();
  os << "phase\taccuracy\tforgetting";
  for (int j = 0; j < n; ++j) os << "\ttask_" << j;
  os << '\n';
  for (int t = 0; t < n; ++t) {
    os << t << '\t' << fmt(report.phase_accuracy[static_cast<std::size_t>(t)]) << '\t'
       << (t == 0 ? std::string("-") : fmt(report.phase_forgetting[static_cast<std::size_t>(t)]));
    for (int j = 0; j < n; ++j) {
      os << '\t' << (j <= t && report.matrix.has(t, j) ? fmt(report.matrix.at(t, j)) : std::string("-"));
    }
    os << '\n';
  }
  os << "# average_accuracy\t" << fmt(report.average_accuracy) << '\n';
  os << "# average_forgetting\t" << fmt(report.average_forgetting) << '\n';
  if (!report.task_samples.empty()) {
    os << "# task_samples";
    for (auto n : report.task_samples) os << '\t' << n;
    os << '\n';
  }
  if (!os) throw IoError("failed writing metrics report " + path.string());
}

MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open metrics report " + path.string());
  std::string line;
  std::vector<std::vector<std::string>> rows;
  MetricsReport r;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) cells.push_back(cell);
    if (header) {
      header = false;
      continue;
    }
    if (cells[0] == "# average_accuracy" && cells.size() == 2) {
      r.average_accuracy = parse_double(cells[1], path);
    } else if (cells[0] == "# average_forgetting" && cells.size() == 2) {
      r.average_forgetting = parse_double(cells[1], path);
    } else if (cells[0] == "# task_samples") {
      for (std::size_t i = 1; i < cells.size(); ++i) {
        r.task_samples.push_back(static_cast<std::int64_t>(parse_double(cells[i], path)));
      }
    } else {
      rows.push_back(cells);
    }
  }
  if (rows.empty()) throw IoError("metrics report " + path.string() + " has no phase rows");
  const int n = static_cast<int>(rows.size());
  r.matrix = AccuracyMatrix(n);
  for (int t = 0; t < n; ++t) {
    const auto& c = rows[static_cast<std::size_t>(t)];
    if (static_cast<int>(c.size()) != 3 + n) throw IoError("malformed metrics row in " + path.string());
    const double a = parse_double(c[1], path);
    r.phase_accuracy.push_back(a);
    r.matrix.set_overall(t, a);
    r.phase_forgetting.push_back(t == 0 ? 0.0 : parse_double(c[2], path));
    for (int j = 0; j <= t; ++j) {
      const auto& v = c[static_cast<std::size_t>(3 + j)];
      if (v != "-") r.matrix.set(t, j, parse_double(v, path));
    }
  }
  if (!r.task_samples.empty() && static_cast<int>(r.task_samples.size()) != n) {
    throw IoError("task sample counts in " + path.string() + " do not match the phase count");
  }
  return r;
}

double task_range_accuracy(const MetricsReport& report, int t, int first, int last) {
  if (first > last || first < 0 || last > t) throw ArgumentError("bad task range");
  double sum = 0.0, weight = 0.0;
  for (int j = first; j <= last; ++j) {
    const double w = report.task_samples.empty() ? 1.0 : static_cast<double>(report.task_samples[static_cast<std::size_t>(j)]);
    sum += w * report.matrix.at(t, j);
    weight += w;
  }
  return weight > 0.0 ? sum / weight : 0.0;
}

}  // namespace featdiff
