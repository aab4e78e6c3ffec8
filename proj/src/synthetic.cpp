#include "featdiff/synthetic.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "featdiff/errors.hpp"

namespace featdiff {

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "isotropic") return SyntheticKind::Isotropic;
  if (name == "anisotropic") return SyntheticKind::Anisotropic;
  if (name == "banana") return SyntheticKind::Banana;
  if (name == "mixture") return SyntheticKind::Mixture;
  throw ArgumentError("unknown synthetic distribution '" + name + "'");
}

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::Isotropic: return "isotropic";
    case SyntheticKind::Anisotropic: return "anisotropic";
    case SyntheticKind::Banana: return "banana";
    case SyntheticKind::Mixture: return "mixture";
  }
  return "?";
}

void SyntheticSpec::validate() const {
  if (dim < 1) throw ArgumentError("synthetic dimension must be positive");
  if (classes.empty()) throw ArgumentError("synthetic spec has no classes");
  if (per_class < 1) throw ArgumentError("synthetic per-class count must be positive");
  if ((kind == SyntheticKind::Banana || kind == SyntheticKind::Mixture) && dim < 2) {
    throw ArgumentError(to_string(kind) + " needs at least 2 dimensions");
  }
  for (const auto& c : classes) {
    if (static_cast<int>(c.mean.size()) != dim || static_cast<int>(c.scale.size()) != dim) {
      throw ArgumentError("synthetic class parameters must have " + std::to_string(dim) + " entries");
    }
    if (kind == SyntheticKind::Mixture && c.components < 1) throw ArgumentError("mixture needs a component");
  }
}

SyntheticSpec default_synthetic_spec(SyntheticKind kind, int dim, int num_classes, std::int64_t per_class,
                                     std::uint64_t seed) {
  SyntheticSpec spec;
  spec.kind = kind;
  spec.dim = dim;
  spec.per_class = per_class;
  spec.seed = seed;
  const double radius = num_classes > 1 ? 6.0 / (2.0 * std::sin(std::numbers::pi / num_classes)) : 0.0;
  for (int c = 0; c < num_classes; ++c) {
    SyntheticClass cls;
    cls.mean.assign(static_cast<std::size_t>(dim), 0.0);
    cls.scale.assign(static_cast<std::size_t>(dim), 1.0);
    const double angle = 2.0 * std::numbers::pi * c / std::max(num_classes, 1);
    cls.mean[0] = radius * std::cos(angle);
    if (dim > 1) cls.mean[1] = radius * std::sin(angle);
    if (kind != SyntheticKind::Isotropic) {
      for (int i = 0; i < dim; ++i) cls.scale[static_cast<std::size_t>(i)] = 0.5 + 0.5 * ((i + c) % 3);
    }
    spec.classes.push_back(cls);
  }
  return spec;
}

FeatureSet sample_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  auto gen = at::make_generator<at::CPUGeneratorImpl>(spec.seed);
  const auto n = spec.per_class;
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  std::vector<torch::Tensor> feats;
  std::vector<torch::Tensor> labels;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const auto& cls = spec.classes[c];
    auto w = torch::randn({n, spec.dim}, gen, opts);
    switch (spec.kind) {
      case SyntheticKind::Isotropic:
      case SyntheticKind::Anisotropic:
        break;
      case SyntheticKind::Banana: {
        auto x = w.select(1, 0);
        w.select(1, 1).add_(cls.warp * x * x);
        break;
      }
      case SyntheticKind::Mixture: {
        auto k = torch::randint(cls.components, {n}, gen, torch::TensorOptions().dtype(torch::kInt64));
        auto angle = k.to(torch::kFloat64) * (2.0 * std::numbers::pi / cls.components);
        w.select(1, 0).add_(cls.spread * torch::cos(angle));
        w.select(1, 1).add_(cls.spread * torch::sin(angle));
        break;
      }
    }
    torch::Tensor scale;
    if (spec.kind == SyntheticKind::Isotropic) {
      scale = torch::full({spec.dim}, cls.scale.front(), opts);
    } else {
      scale = torch::tensor(cls.scale, opts);
    }
    feats.push_back(w * scale + torch::tensor(cls.mean, opts));
    labels.push_back(torch::full({n}, static_cast<std::int64_t>(c), torch::kInt64));
  }
  FeatureSet out;
  out.features = torch::cat(feats).to(torch::kFloat32);
  out.labels = torch::cat(labels);
  return out;
}

namespace {

/// Orders the pair so that every quantity is computed the same way whichever
/// argument came first.
bool canonical_first(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.size(0) != b.size(0)) return a.size(0) < b.size(0);
  const auto bytes = static_cast<std::size_t>(a.numel()) * sizeof(double);
  return std::memcmp(a.data_ptr<double>(), b.data_ptr<double>(), bytes) <= 0;
}

torch::Tensor strided(const torch::Tensor& x, std::int64_t keep) {
  if (x.size(0) <= keep) return x;
  auto idx = torch::linspace(0, static_cast<double>(x.size(0) - 1), keep, torch::kFloat64).round().to(torch::kInt64);
  return x.index_select(0, idx);
}

double median_of_pairs(const torch::Tensor& pooled) {
  auto d2 = torch::cdist(pooled, pooled).pow(2);
  const auto n = pooled.size(0);
  auto upper = torch::triu_indices(n, n, 1);
  auto vals = d2.index({upper[0], upper[1]});
  if (vals.numel() == 0) throw ArgumentError("median heuristic needs at least two points");
  // Lower median, so the result is an actual pairwise distance.
  auto sorted = std::get<0>(vals.sort());
  return std::sqrt(sorted[(vals.numel() - 1) / 2].item<double>());
}

}  // namespace

double median_heuristic_bandwidth(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.to(torch::kFloat64).contiguous();
  auto y = b.to(torch::kFloat64).contiguous();
  if (!canonical_first(x, y)) std::swap(x, y);
  const auto total = x.size(0) + y.size(0);
  const std::int64_t cap = 1000;
  const auto kx = total <= cap ? x.size(0) : std::max<std::int64_t>(1, cap * x.size(0) / total);
  const auto ky = total <= cap ? y.size(0) : std::max<std::int64_t>(1, cap - kx);
  const double h = median_of_pairs(torch::cat({strided(x, kx), strided(y, ky)}));
  return h > 0.0 ? h : 1.0;
}

MmdResult mmd(const torch::Tensor& a, const torch::Tensor& b, std::optional<double> bandwidth) {
  if (a.dim() != 2 || b.dim() != 2) throw ArgumentError("mmd expects [n, d] samples");
  if (a.size(1) != b.size(1)) {
    throw ArgumentError("mmd dimension mismatch: " + std::to_string(a.size(1)) + " vs " + std::to_string(b.size(1)));
  }
  if (a.size(0) < 2 || b.size(0) < 2) throw ArgumentError("mmd needs at least two points per set");
  torch::NoGradGuard no_grad;
  auto x = a.to(torch::kFloat64).contiguous();
  auto y = b.to(torch::kFloat64).contiguous();
  if (!canonical_first(x, y)) std::swap(x, y);

  MmdResult r;
  r.bandwidth = bandwidth ? *bandwidth : median_heuristic_bandwidth(x, y);
  if (!(r.bandwidth > 0.0)) throw ArgumentError("mmd bandwidth must be positive");
  const double gamma = 1.0 / (2.0 * r.bandwidth * r.bandwidth);
  auto kernel = [gamma](const torch::Tensor& p, const torch::Tensor& q) {
    return torch::exp(-gamma * torch::cdist(p, q).pow(2));
  };
  const auto m = static_cast<double>(x.size(0));
  const auto n = static_cast<double>(y.size(0));
  auto kxx = kernel(x, x);
  kxx.fill_diagonal_(0.0);
  auto kyy = kernel(y, y);
  kyy.fill_diagonal_(0.0);
  auto kxy = kernel(x, y);

  // Per-point contributions of the linearized statistic.
  auto gx = kxx.sum(1) / (m - 1.0) - kxy.mean(1);
  auto gy = kyy.sum(1) / (n - 1.0) - kxy.mean(0);
  r.estimate = kxx.sum().item<double>() / (m * (m - 1.0)) + kyy.sum().item<double>() / (n * (n - 1.0)) -
               2.0 * kxy.mean().item<double>();
  const double var = 4.0 / m * gx.var().item<double>() + 4.0 / n * gy.var().item<double>();
  r.standard_error = std::sqrt(std::max(var, 0.0));
  return r;
}

torch::Tensor gaussian_prototype_baseline(const ClassStats& stats, std::int64_t n, std::uint64_t seed) {
  if (n < 0) throw ArgumentError("sample count must be non-negative");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto z = torch::randn({n, stats.dim()}, gen, torch::TensorOptions().dtype(torch::kFloat64));
  return (z * stats.std.unsqueeze(0) + stats.mean.unsqueeze(0)).to(torch::kFloat32);
}

}  // namespace featdiff
