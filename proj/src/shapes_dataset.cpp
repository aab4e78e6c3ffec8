#include "featdiff/shapes_dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "featdiff/random.hpp"

namespace featdiff {
namespace {

struct Rgb {
  double r, g, b;
};

double smooth_step(double signed_distance) {
  // Inside is negative; one-pixel soft edge.
  return 1.0 / (1.0 + std::exp(4.0 * signed_distance));
}

double sd_box(double x, double y, double hx, double hy) {
  const double dx = std::abs(x) - hx;
  const double dy = std::abs(y) - hy;
  const double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
  return std::hypot(ox, oy) + std::min(std::max(dx, dy), 0.0);
}

double sd_segment(double x, double y, double ax, double ay, double bx, double by) {
  const double px = x - ax, py = y - ay, vx = bx - ax, vy = by - ay;
  const double h = std::clamp((px * vx + py * vy) / (vx * vx + vy * vy), 0.0, 1.0);
  return std::hypot(px - vx * h, py - vy * h);
}

double sd_triangle(double x, double y, double half_side) {
  // Equilateral triangle pointing up in image coordinates (y grows downward).
  const double k = std::sqrt(3.0);
  double px = std::abs(x) - half_side;
  double py = -y + half_side / k;
  if (px + k * py > 0.0) {
    const double nx = (px - k * py) / 2.0;
    const double ny = (-k * px - py) / 2.0;
    px = nx;
    py = ny;
  }
  px -= std::clamp(px, -2.0 * half_side, 0.0);
  return -std::hypot(px, py) * (py < 0.0 ? -1.0 : 1.0);
}

/// Signed distance of the class shape in its canonical frame (unit = pixels).
double shape_distance(int cls, double x, double y, double r) {
  switch (cls) {
    case 0:  // disk
      return std::hypot(x, y) - r;
    case 1:  // ring
      return std::abs(std::hypot(x, y) - 0.7 * r) - 0.22 * r;
    case 2:  // filled square
      return sd_box(x, y, 0.75 * r, 0.75 * r);
    case 3:  // triangle
      return sd_triangle(x, y - 0.15 * r, 1.05 * r);
    case 4:  // plus
      return std::min(sd_box(x, y, r, 0.22 * r), sd_box(x, y, 0.22 * r, r));
    case 5: {  // diagonal cross
      const double a = sd_segment(x, y, -0.75 * r, -0.75 * r, 0.75 * r, 0.75 * r);
      const double b = sd_segment(x, y, -0.75 * r, 0.75 * r, 0.75 * r, -0.75 * r);
      return std::min(a, b) - 0.2 * r;
    }
    case 6:  // two horizontal bars
      return std::min(sd_box(x, y - 0.45 * r, r, 0.18 * r), sd_box(x, y + 0.45 * r, r, 0.18 * r));
    case 7: {  // "C": ring with an opening on the right
      const double ring = std::abs(std::hypot(x, y) - 0.7 * r) - 0.2 * r;
      const double gap = sd_box(x - 0.7 * r, y, 0.45 * r, 0.35 * r);
      return std::max(ring, -gap);
    }
    case 8: {  // checkerboard patch
      const double box = sd_box(x, y, 0.9 * r, 0.9 * r);
      const double cell = 0.45 * r;
      const auto ix = static_cast<long>(std::floor((x + 0.9 * r) / cell));
      const auto iy = static_cast<long>(std::floor((y + 0.9 * r) / cell));
      return ((ix + iy) % 2 == 0) ? box : std::max(box, 0.5);
    }
    default:  // hollow square
      return std::abs(sd_box(x, y, 0.7 * r, 0.7 * r)) - 0.16 * r;
  }
}

Rgb random_color(std::mt19937_64& rng, double lo, double hi) {
  auto u = [&] { return lo + (hi - lo) * uniform_unit(rng); };
  return {u(), u(), u()};
}

double normal(std::mt19937_64& rng) {
  // Box-Muller on the portable uniform source.
  const double u1 = std::max(uniform_unit(rng), 1e-300);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

ImageDataset make_shapes10(const ShapesConfig& config, Split split, std::uint64_t seed) {
  const int s = config.image_size;
  const std::int64_t n = config.per_class * kShapesClasses;
  auto images = torch::empty({n, 3, s, s}, torch::kUInt8);
  auto labels = torch::empty({n}, torch::kInt64);
  auto* px = images.data_ptr<std::uint8_t>();
  auto* lab = labels.data_ptr<std::int64_t>();
  std::mt19937_64 rng(derive_seed(seed, split == Split::Train ? "shapes-train" : "shapes-test"));
  std::vector<std::array<double, 3>> canvas(static_cast<std::size_t>(s * s));

  for (std::int64_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % kShapesClasses);
    lab[i] = cls;
    const bool light_background = uniform_unit(rng) < 0.5;
    const Rgb bg = light_background ? random_color(rng, 0.6, 1.0) : random_color(rng, 0.0, 0.35);
    const Rgb fg = light_background ? random_color(rng, 0.0, 0.4) : random_color(rng, 0.55, 1.0);
    const double r = config.min_radius + (config.max_radius - config.min_radius) * uniform_unit(rng);
    const double cx = 0.5 * (s - 1) + config.max_shift * (2.0 * uniform_unit(rng) - 1.0);
    const double cy = 0.5 * (s - 1) + config.max_shift * (2.0 * uniform_unit(rng) - 1.0);
    const double tilt = config.max_tilt_deg * (2.0 * uniform_unit(rng) - 1.0) * std::numbers::pi / 180.0;
    const double ct = std::cos(tilt), st = std::sin(tilt);

    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double u = ct * dx + st * dy;
        const double v = -st * dx + ct * dy;
        const double a = smooth_step(shape_distance(cls, u, v, r));
        canvas[static_cast<std::size_t>(y * s + x)] = {bg.r + a * (fg.r - bg.r), bg.g + a * (fg.g - bg.g),
                                                       bg.b + a * (fg.b - bg.b)};
      }
    }
    for (int k = 0; k < config.clutter; ++k) {
      const Rgb c = random_color(rng, 0.0, 1.0);
      const double bx = s * uniform_unit(rng), by = s * uniform_unit(rng);
      const double br = 1.0 + 1.5 * uniform_unit(rng);
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          const double a = smooth_step(std::hypot(x - bx, y - by) - br);
          auto& p = canvas[static_cast<std::size_t>(y * s + x)];
          p = {p[0] + a * (c.r - p[0]), p[1] + a * (c.g - p[1]), p[2] + a * (c.b - p[2])};
        }
      }
    }
    for (int ch = 0; ch < 3; ++ch) {
      for (int k = 0; k < s * s; ++k) {
        const double v = canvas[static_cast<std::size_t>(k)][static_cast<std::size_t>(ch)] + config.noise * normal(rng);
        px[(i * 3 + ch) * s * s + k] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  }
  return {images, labels, kShapesClasses};
}

}  // namespace featdiff
