#include "featdiff/plots.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "featdiff/errors.hpp"

namespace featdiff {
namespace {

struct Series {
  std::string name;
  cv::Scalar color;
  std::vector<std::optional<double>> values;
};

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kLeft = 60, kRight = 20, kTop = 30, kBottom = 50;

void render(const std::vector<Series>& series, int phases, const std::string& title,
            const std::filesystem::path& path) {
  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const int plot_w = kWidth - kLeft - kRight;
  const int plot_h = kHeight - kTop - kBottom;

  double lo = 100.0, hi = 0.0;
  for (const auto& s : series) {
    for (const auto& v : s.values) {
      if (!v) continue;
      lo = std::min(lo, *v);
      hi = std::max(hi, *v);
    }
  }
  lo = std::max(0.0, std::floor(lo / 10.0) * 10.0 - 10.0);
  hi = std::min(100.0, std::ceil(hi / 10.0) * 10.0 + 10.0);
  if (hi <= lo) hi = lo + 10.0;

  auto px = [&](int t) {
    return kLeft + (phases > 1 ? plot_w * t / (phases - 1) : plot_w / 2);
  };
  auto py = [&](double a) { return kTop + static_cast<int>(std::lround(plot_h * (hi - a) / (hi - lo))); };

  const cv::Scalar grid(220, 220, 220), ink(40, 40, 40);
  for (double a = lo; a <= hi + 1e-9; a += 10.0) {
    cv::line(img, {kLeft, py(a)}, {kLeft + plot_w, py(a)}, grid, 1);
    cv::putText(img, std::to_string(static_cast<int>(a)), {8, py(a) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1);
  }
  for (int t = 0; t < phases; ++t) {
    cv::line(img, {px(t), kTop + plot_h}, {px(t), kTop + plot_h + 4}, ink, 1);
    cv::putText(img, std::to_string(t), {px(t) - 4, kTop + plot_h + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1);
  }
  cv::rectangle(img, {kLeft, kTop}, {kLeft + plot_w, kTop + plot_h}, ink, 1);
  cv::putText(img, "phase", {kLeft + plot_w / 2 - 20, kHeight - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45, ink, 1);
  cv::putText(img, title, {kLeft, 20}, cv::FONT_HERSHEY_SIMPLEX, 0.5, ink, 1);

  int legend_y = kTop + 16;
  for (const auto& s : series) {
    std::optional<cv::Point> prev;
    for (int t = 0; t < phases; ++t) {
      const auto& v = s.values[static_cast<std::size_t>(t)];
      if (!v) {
        prev.reset();
        continue;
      }
      const cv::Point p{px(t), py(*v)};
      if (prev) cv::line(img, *prev, p, s.color, 2, cv::LINE_AA);
      cv::circle(img, p, 4, s.color, cv::FILLED, cv::LINE_AA);
      prev = p;
    }
    if (series.size() > 1) {
      cv::line(img, {kLeft + plot_w - 110, legend_y - 4}, {kLeft + plot_w - 90, legend_y - 4}, s.color, 2);
      cv::putText(img, s.name, {kLeft + plot_w - 84, legend_y}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1);
      legend_y += 16;
    }
  }
  if (!cv::imwrite(path.string(), img)) throw IoError("cannot write plot " + path.string());
}

}  // namespace

void plot_accuracy_curve(const MetricsReport& report, const std::filesystem::path& path) {
  const int n = static_cast<int>(report.phase_accuracy.size());
  Series s{"all seen", cv::Scalar(180, 90, 30), {}};
  for (double a : report.phase_accuracy) s.values.emplace_back(a);
  char title[96];
  std::snprintf(title, sizeof title, "top-1 accuracy on seen classes (average %.1f)", report.average_accuracy);
  render({s}, n, title, path);
}

void plot_old_new_curves(const MetricsReport& report, const std::filesystem::path& path) {
  const int n = static_cast<int>(report.phase_accuracy.size());
  Series total{"total", cv::Scalar(180, 90, 30), {}};
  Series old_s{"old", cv::Scalar(40, 40, 200), {}};
  Series new_s{"new", cv::Scalar(40, 160, 40), {}};
  for (int t = 0; t < n; ++t) {
    total.values.emplace_back(report.phase_accuracy[static_cast<std::size_t>(t)]);
    old_s.values.push_back(t > 0 ? std::optional<double>(task_range_accuracy(report, t, 0, t - 1)) : std::nullopt);
    new_s.values.emplace_back(task_range_accuracy(report, t, t, t));
  }
  render({total, old_s, new_s}, n, "accuracy of total / old / new classes", path);
}

}  // namespace featdiff
