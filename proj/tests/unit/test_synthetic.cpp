#include <doctest.h>

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <filesystem>

#include "featdiff/errors.hpp"
#include "featdiff/features.hpp"
#include "featdiff/synthetic.hpp"

using namespace featdiff;
namespace fs = std::filesystem;

namespace {

// Direct double loop over the unbiased estimator.
double naive_mmd2(const torch::Tensor& a, const torch::Tensor& b, double h) {
  auto ad = a.to(torch::kFloat64), bd = b.to(torch::kFloat64);
  auto x = ad.accessor<double, 2>();
  auto y = bd.accessor<double, 2>();
  const auto m = a.size(0), n = b.size(0), d = a.size(1);
  auto k = [&](auto& p, std::int64_t i, auto& q, std::int64_t j) {
    double s = 0;
    for (std::int64_t c = 0; c < d; ++c) s += (p[i][c] - q[j][c]) * (p[i][c] - q[j][c]);
    return std::exp(-s / (2 * h * h));
  };
  double sxx = 0, syy = 0, sxy = 0;
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < m; ++j)
      if (i != j) sxx += k(x, i, x, j);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      if (i != j) syy += k(y, i, y, j);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) sxy += k(x, i, y, j);
  return sxx / (m * (m - 1.0)) + syy / (n * (n - 1.0)) - 2 * sxy / (m * static_cast<double>(n));
}

}  // namespace

TEST_CASE("mmd matches the direct estimator") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(9);
  auto a = torch::randn({40, 3}, gen);
  auto b = torch::randn({55, 3}, gen) + 0.5;
  const auto r = mmd(a, b, 1.3);
  CHECK(r.bandwidth == 1.3);
  CHECK(r.estimate == doctest::Approx(naive_mmd2(a, b, 1.3)).epsilon(1e-9));
  CHECK(r.standard_error > 0);
}

TEST_CASE("mmd is exactly symmetric") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(10);
  auto a = torch::randn({64, 5}, gen);
  auto b = torch::randn({80, 5}, gen) * 1.5;
  const auto ab = mmd(a, b), ba = mmd(b, a);
  CHECK(ab.estimate == ba.estimate);
  CHECK(ab.standard_error == ba.standard_error);
  CHECK(ab.bandwidth == ba.bandwidth);
  auto c = torch::randn({64, 5}, gen);
  CHECK(mmd(a, c).estimate == mmd(c, a).estimate);
}

TEST_CASE("mmd separates shifted samples and not identical laws") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(11);
  auto a = torch::randn({300, 2}, gen);
  auto same = torch::randn({300, 2}, gen);
  auto shifted = torch::randn({300, 2}, gen) + 1.0;
  const auto r0 = mmd(a, same);
  const auto r1 = mmd(a, shifted);
  CHECK(std::abs(r0.estimate) < 4 * r1.standard_error);
  CHECK(r1.estimate > 5 * r1.standard_error);
}

TEST_CASE("mmd shift beats the permutation null") {
  // Permutation test as an independent reference: the observed statistic
  // should exceed every shuffled one for a clear shift.
  auto gen = at::make_generator<at::CPUGeneratorImpl>(12);
  auto a = torch::randn({60, 2}, gen);
  auto b = torch::randn({60, 2}, gen) + 0.8;
  const double h = median_heuristic_bandwidth(a, b);
  const double observed = mmd(a, b, h).estimate;
  auto pooled = torch::cat({a, b});
  int above = 0;
  for (int p = 0; p < 50; ++p) {
    auto idx = torch::randperm(120, gen);
    auto s = pooled.index_select(0, idx);
    if (mmd(s.slice(0, 0, 60), s.slice(0, 60), h).estimate >= observed) ++above;
  }
  CHECK(above == 0);
}

TEST_CASE("median heuristic on a known configuration") {
  // pooled points 0, 1, 3 on a line: distances 1, 2, 3
  auto a = torch::tensor({0.f, 1.f}).reshape({2, 1});
  auto b = torch::tensor({3.f}).reshape({1, 1});
  CHECK(median_heuristic_bandwidth(a, b) == doctest::Approx(2.0));
}

TEST_CASE("banana coordinate mean is warp times E[z^2]") {
  auto spec = default_synthetic_spec(SyntheticKind::Banana, 2, 1, 40000, 3);
  spec.classes[0].mean = {0.0, 0.0};
  spec.classes[0].scale = {1.0, 1.0};
  spec.classes[0].warp = 1.0;
  const auto s = sample_synthetic(spec);
  auto f = s.features.to(torch::kFloat64);
  CHECK(f.select(1, 0).mean().item<double>() == doctest::Approx(0.0).epsilon(0.03));
  CHECK(f.select(1, 1).mean().item<double>() == doctest::Approx(1.0).epsilon(0.03));
  // Var(z1 + z0^2) = 1 + 2
  CHECK(f.select(1, 1).var().item<double>() == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("isotropic covariance") {
  auto spec = default_synthetic_spec(SyntheticKind::Isotropic, 4, 1, 20000, 4);
  spec.classes[0].scale = {2.0, 2.0, 2.0, 2.0};
  const auto s = sample_synthetic(spec);
  auto f = s.features.to(torch::kFloat64);
  auto c = f - f.mean(0);
  auto cov = c.t().mm(c) / (f.size(0) - 1);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double v = cov[i][j].item<double>();
      if (i == j)
        CHECK(v == doctest::Approx(4.0).epsilon(0.05));
      else
        CHECK(std::abs(v) < 0.2);
    }
}

TEST_CASE("synthetic sets are deterministic and labeled") {
  const auto spec = default_synthetic_spec(SyntheticKind::Mixture, 6, 3, 100, 8);
  const auto a = sample_synthetic(spec), b = sample_synthetic(spec);
  CHECK(torch::equal(a.features, b.features));
  CHECK(a.classes() == std::vector<int>{0, 1, 2});
  CHECK(a.class_counts() == std::vector<std::int64_t>{100, 100, 100});
  CHECK((a.features.scalar_type() == torch::kFloat32));
  CHECK_THROWS_AS(parse_synthetic_kind("swirl"), ArgumentError);
  CHECK(parse_synthetic_kind(to_string(SyntheticKind::Anisotropic)) == SyntheticKind::Anisotropic);
}

TEST_CASE("gaussian prototype baseline matches its stats") {
  ClassStats st;
  st.class_id = 0;
  st.count = 10;
  st.mean = torch::tensor({1.0, -2.0}, torch::kFloat64);
  st.std = torch::tensor({0.5, 3.0}, torch::kFloat64);
  auto g = gaussian_prototype_baseline(st, 40000, 2).to(torch::kFloat64);
  CHECK(g.mean(0)[0].item<double>() == doctest::Approx(1.0).epsilon(0.02));
  CHECK(g.mean(0)[1].item<double>() == doctest::Approx(-2.0).epsilon(0.05));
  CHECK(g.std(0)[0].item<double>() == doctest::Approx(0.5).epsilon(0.03));
  CHECK(g.std(0)[1].item<double>() == doctest::Approx(3.0).epsilon(0.03));
}

TEST_CASE("feature cache round trip") {
  const auto set = sample_synthetic(default_synthetic_spec(SyntheticKind::Isotropic, 5, 4, 7, 1));
  const auto path = fs::temp_directory_path() / "featdiff_cache_test.fdfc";
  save_feature_cache(path, set);
  const auto back = load_feature_cache(path);
  CHECK(torch::equal(back.features, set.features));
  CHECK(torch::equal(back.labels, set.labels));
  fs::remove(path);
  CHECK_THROWS_AS(load_feature_cache(path), IoError);
}
